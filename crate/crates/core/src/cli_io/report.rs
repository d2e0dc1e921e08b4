use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::pipeline::OutputFormat;
use crate::baseline::BaselineShares;
use crate::bootstrap::{BootstrapReport, PHandling};
use crate::error::Result;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub schema_version: u32,
    pub software: String,
    pub version: String,
    pub seed: u64,
    pub input: InputEcho,
    /// Absent when one instrument arm is empty.
    pub baseline: Option<BaselineBlock>,
    pub estimates: Vec<EstimatorBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputEcho {
    pub source: String,
    pub g: [u64; 4],
    pub n: u64,
    pub estimator: String,
    pub p_mode: String,
    pub bootstrap: usize,
    pub restarts: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineBlock {
    pub first_stage: f64,
    pub p_empirical: f64,
    pub monotonicity_violated: bool,
    /// `[never, defier, complier, always]`, rounded to 4 decimals.
    pub shares: [f64; 4],
}

impl From<&BaselineShares> for BaselineBlock {
    fn from(s: &BaselineShares) -> Self {
        Self {
            first_stage: s.first_stage,
            p_empirical: s.p_empirical,
            monotonicity_violated: s.monotonicity_violated,
            shares: s.as_array().map(round_share),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorBlock {
    /// `least_squares` or `mle`.
    pub estimator: String,
    pub t_hat: [u64; 4],
    pub shares: [f64; 4],
    pub p_used: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_likelihood: Option<f64>,
    pub ties: Vec<[u64; 4]>,
    pub diagnostics: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapBlock {
    pub replications: usize,
    pub failures: usize,
    pub p_handling: PHandling,
    pub se_t: [f64; 4],
    pub se_shares: [f64; 4],
    pub se_p: f64,
}

impl From<&BootstrapReport> for BootstrapBlock {
    fn from(r: &BootstrapReport) -> Self {
        Self {
            replications: r.replications,
            failures: r.failures,
            p_handling: r.p_handling,
            se_t: r.se_t,
            se_shares: r.se_shares,
            se_p: r.se_p,
        }
    }
}

pub fn round_share(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

const TYPE_NAMES: [&str; 4] = ["never takers", "defiers", "compliers", "always takers"];

/// Renders the report; both formats end with a newline.
pub fn render(report: &EstimateReport, format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(report)?;
            s.push('\n');
            Ok(s)
        }
        OutputFormat::Text => Ok(render_text(report)),
    }
}

fn render_text(r: &EstimateReport) -> String {
    let mut s = String::new();
    let [g1, g2, g3, g4] = r.input.g;
    let _ = writeln!(s, "{} {} (schema {}), seed {}", r.software, r.version, r.schema_version, r.seed);
    let _ = writeln!(s, "input: {}", r.input.source);
    let _ = writeln!(s, "  g = ({g1}, {g2}, {g3}, {g4}), n = {}", r.input.n);
    let _ = writeln!(s, "  estimator {}, p mode {}, bootstrap {}", r.input.estimator, r.input.p_mode, r.input.bootstrap);
    match &r.baseline {
        Some(b) => {
            let _ = writeln!(s, "\nmonotonicity baseline");
            let _ = writeln!(s, "  first stage   {:.4}", b.first_stage);
            let _ = writeln!(s, "  p empirical   {:.4}", b.p_empirical);
            for (name, share) in TYPE_NAMES.iter().zip(b.shares) {
                let _ = writeln!(s, "  {name:<14}{share:.4}");
            }
            if b.monotonicity_violated {
                let _ = writeln!(s, "  (negative first stage: monotonicity violated)");
            }
        }
        None => {
            let _ = writeln!(s, "\nmonotonicity baseline: unavailable (an instrument arm is empty)");
        }
    }
    for e in &r.estimates {
        let _ = writeln!(s, "\n{}, p = {:.6}", e.estimator.replace('_', " "), e.p_used);
        if let Some(o) = e.objective {
            let _ = writeln!(s, "  objective       {o:.6e}");
        }
        if let Some(ll) = e.log_likelihood {
            let _ = writeln!(s, "  log-likelihood  {ll:.6}");
        }
        for (i, name) in TYPE_NAMES.iter().enumerate() {
            let _ = write!(s, "  {:<14}{:>10}  {:.4}", name, e.t_hat[i], e.shares[i]);
            if let Some(b) = &e.bootstrap {
                let _ = write!(s, "  (se {:.1}, {:.4})", b.se_t[i], b.se_shares[i]);
            }
            s.push('\n');
        }
        if e.ties.len() > 1 {
            let _ = writeln!(s, "  tied solutions: {}", e.ties.len());
        }
        if let Some(b) = &e.bootstrap {
            let _ = writeln!(s, "  bootstrap: {} replications, {} failed, se(p) {:.6}", b.replications, b.failures, b.se_p);
        }
    }
    s
}
