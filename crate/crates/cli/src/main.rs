use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use strata_core::bootstrap::PHandling;
use strata_core::cli_io::{
    render, run_pipeline, simulate_lines, EstimatorSelection, InputSource, OutputFormat, PMode, RunConfig,
};
use strata_core::simulator::SimConfig;
use strata_core::TypeVector;

#[derive(Parser)]
#[command(name = "strata", version, about = "Estimate principal-strata counts from a 2x2 instrument/treatment table")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate type counts from grouped data (JSON {"g":[...]} or CSV z,d,count).
    Estimate {
        #[arg(long)]
        input: PathBuf,
        /// ls, mle or both
        #[arg(long, default_value = "ls")]
        estimator: EstimatorSelection,
        /// fixed=<v>, empirical or estimate
        #[arg(long, default_value = "empirical")]
        p: PMode,
        /// Bootstrap replications (0 disables)
        #[arg(long, default_value_t = 0)]
        bootstrap: usize,
        /// Hold p at the full-sample estimate in bootstrap resamples
        #[arg(long)]
        bootstrap_hold_p: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random restarts for the solvers (defaults depend on the estimator)
        #[arg(long)]
        restarts: Option<usize>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// json or text
        #[arg(long, default_value = "json")]
        format: OutputFormat,
    },
    /// Draw grouped datasets from the randomization model, one JSON line each.
    Simulate {
        /// Type counts t1,t2,t3,t4
        #[arg(long, value_delimiter = ',', required = true)]
        t: Vec<u64>,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 1)]
        reps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> strata_core::Result<()> {
    match cli.command {
        Command::Estimate { input, estimator, p, bootstrap, bootstrap_hold_p, seed, restarts, output, format } => {
            let cfg = RunConfig {
                estimator,
                p_mode: p,
                bootstrap,
                seed,
                restarts,
                p_handling: if bootstrap_hold_p { PHandling::HoldAtOriginal } else { PHandling::Reestimate },
                output,
                format,
                ..RunConfig::new(InputSource::Path(input))
            };
            let text = render(&run_pipeline(&cfg)?, cfg.format)?;
            match &cfg.output {
                Some(path) => std::fs::write(path, text)?,
                None => print!("{text}"),
            }
        }
        Command::Simulate { t, p, reps, seed } => {
            let t: [u64; 4] = t.try_into().map_err(|t: Vec<u64>| {
                strata_core::Error::InvalidArgument(format!("--t needs 4 counts, got {}", t.len()))
            })?;
            let cfg = SimConfig { t: TypeVector::new(t), p, seed, replications: reps };
            print!("{}", simulate_lines(&cfg)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
