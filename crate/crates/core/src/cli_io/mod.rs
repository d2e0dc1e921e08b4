//! Input parsing, run configuration, pipeline orchestration and report
//! rendering shared by the command-line tool.

mod input;
mod pipeline;
mod report;

pub use input::{emit_grouped, parse_input, read_input, simulate_lines};
pub use pipeline::{run_pipeline, EstimatorSelection, InputSource, OutputFormat, PMode, RunConfig};
pub use report::{
    render, round_share, BaselineBlock, BootstrapBlock, EstimateReport, EstimatorBlock, InputEcho, SCHEMA_VERSION,
};
