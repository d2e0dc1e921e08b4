use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::input::read_input;
use super::report::{round_share, BaselineBlock, BootstrapBlock, EstimateReport, EstimatorBlock, InputEcho, SCHEMA_VERSION};
use crate::baseline::monotonicity_shares;
use crate::bootstrap::{bootstrap_se_with, BootstrapOptions, EstimatorConfig, PHandling};
use crate::error::{check_open_unit, Error, Result};
use crate::least_squares::{self, ls_estimate_free_p_with, ls_estimate_with, LsOptions, LsSolution};
use crate::mle::{self, mle_exact, mle_heuristic, mle_profile_p_with, MleResult, ProfileOptions, DEFAULT_EXACT_CAP};
use crate::model::GroupedData;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InputSource {
    Path(PathBuf),
    Inline(GroupedData),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorSelection {
    Ls,
    Mle,
    Both,
}

impl EstimatorSelection {
    fn ls(self) -> bool {
        matches!(self, Self::Ls | Self::Both)
    }

    fn mle(self) -> bool {
        matches!(self, Self::Mle | Self::Both)
    }
}

impl fmt::Display for EstimatorSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ls => "ls",
            Self::Mle => "mle",
            Self::Both => "both",
        })
    }
}

impl FromStr for EstimatorSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ls" => Ok(Self::Ls),
            "mle" => Ok(Self::Mle),
            "both" => Ok(Self::Both),
            _ => Err(Error::InvalidArgument(format!("unknown estimator {s:?} (expected ls, mle or both)"))),
        }
    }
}

/// How the assignment probability is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PMode {
    Fixed(f64),
    /// `(g1 + g2) / n`, set before estimation.
    Empirical,
    /// Estimated jointly with the type counts.
    Estimate,
}

impl fmt::Display for PMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Fixed(p) => write!(f, "fixed={p}"),
            Self::Empirical => f.write_str("empirical"),
            Self::Estimate => f.write_str("estimate"),
        }
    }
}

impl FromStr for PMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "empirical" => Ok(Self::Empirical),
            "estimate" => Ok(Self::Estimate),
            _ => {
                let v = s.strip_prefix("fixed=").ok_or_else(|| {
                    Error::InvalidArgument(format!("unknown p mode {s:?} (expected fixed=<v>, empirical or estimate)"))
                })?;
                let p: f64 = v.parse().map_err(|_| Error::InvalidArgument(format!("fixed p {v:?} is not a number")))?;
                Ok(Self::Fixed(check_open_unit(p)?))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Json,
    Text,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Self::Json),
            "text" => Ok(Self::Text),
            _ => Err(Error::InvalidArgument(format!("unknown format {s:?} (expected json or text)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub input: InputSource,
    pub estimator: EstimatorSelection,
    pub p_mode: PMode,
    /// Bootstrap replications; 0 turns the bootstrap off.
    pub bootstrap: usize,
    pub seed: u64,
    /// Overrides each estimator's default number of restarts.
    pub restarts: Option<usize>,
    pub p_handling: PHandling,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
}

impl RunConfig {
    pub fn new(input: InputSource) -> Self {
        Self {
            input,
            estimator: EstimatorSelection::Ls,
            p_mode: PMode::Empirical,
            bootstrap: 0,
            seed: 0,
            restarts: None,
            p_handling: PHandling::default(),
            output: None,
            format: OutputFormat::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if let PMode::Fixed(p) = self.p_mode {
            check_open_unit(p)?;
        }
        if self.bootstrap == 1 {
            return Err(Error::InvalidArgument("bootstrap needs at least 2 replications (0 disables it)".into()));
        }
        if self.restarts == Some(0) {
            return Err(Error::InvalidArgument("restarts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Baseline, the selected estimators and (optionally) their bootstrap
/// standard errors. Contains no timings, so equal configurations give equal
/// reports.
pub fn run_pipeline(cfg: &RunConfig) -> Result<EstimateReport> {
    cfg.validate()?;
    let (g, source) = match &cfg.input {
        InputSource::Path(path) => (read_input(path)?, path.display().to_string()),
        InputSource::Inline(g) => {
            g.require_nonempty()?;
            (*g, "inline".to_string())
        }
    };

    let baseline = if g.intervention_total() > 0 && g.control_total() > 0 {
        Some(BaselineBlock::from(&monotonicity_shares(&g)?))
    } else {
        None
    };

    let mut estimates = Vec::new();
    if cfg.estimator.ls() {
        let restarts = cfg.restarts.unwrap_or(least_squares::DEFAULT_RESTARTS);
        let mut block = ls_block(&run_ls(&g, cfg.p_mode, cfg.seed, restarts)?)?;
        let config = match cfg.p_mode {
            PMode::Fixed(p) => EstimatorConfig::LsFixed { p, restarts },
            PMode::Empirical => EstimatorConfig::LsEmpirical { restarts },
            PMode::Estimate => EstimatorConfig::LsFreeP { restarts },
        };
        block.bootstrap = run_bootstrap(&g, &config, cfg)?;
        estimates.push(block);
    }
    if cfg.estimator.mle() {
        let restarts = cfg.restarts.unwrap_or(mle::DEFAULT_RESTARTS);
        let mut block = mle_block(&run_mle(&g, cfg.p_mode, cfg.seed, restarts)?)?;
        let config = match cfg.p_mode {
            PMode::Fixed(p) => EstimatorConfig::MleFixed { p, restarts },
            PMode::Empirical => EstimatorConfig::MleEmpirical { restarts },
            PMode::Estimate => EstimatorConfig::MleProfile { restarts },
        };
        block.bootstrap = run_bootstrap(&g, &config, cfg)?;
        estimates.push(block);
    }

    Ok(EstimateReport {
        schema_version: SCHEMA_VERSION,
        software: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        input: InputEcho {
            source,
            g: g.counts(),
            n: g.total(),
            estimator: cfg.estimator.to_string(),
            p_mode: cfg.p_mode.to_string(),
            bootstrap: cfg.bootstrap,
            restarts: cfg.restarts,
        },
        baseline,
        estimates,
    })
}

fn run_ls(g: &GroupedData, mode: PMode, seed: u64, restarts: usize) -> Result<LsSolution> {
    let opts = LsOptions { restarts, seed, ..Default::default() };
    match mode {
        PMode::Fixed(p) => ls_estimate_with(g, p, &opts),
        PMode::Empirical => ls_estimate_with(g, g.empirical_p()?, &opts),
        PMode::Estimate => ls_estimate_free_p_with(g, &opts),
    }
}

fn run_mle(g: &GroupedData, mode: PMode, seed: u64, restarts: usize) -> Result<MleResult> {
    let at = |p: f64| {
        if g.total() <= DEFAULT_EXACT_CAP {
            mle_exact(g, p)
        } else {
            mle_heuristic(g, p, seed, restarts)
        }
    };
    match mode {
        PMode::Fixed(p) => at(p),
        PMode::Empirical => at(g.empirical_p()?),
        PMode::Estimate => mle_profile_p_with(g, &ProfileOptions { seed, restarts, ..Default::default() }),
    }
}

fn run_bootstrap(g: &GroupedData, config: &EstimatorConfig, cfg: &RunConfig) -> Result<Option<BootstrapBlock>> {
    if cfg.bootstrap == 0 {
        return Ok(None);
    }
    let opts = BootstrapOptions { p_handling: cfg.p_handling, ..BootstrapOptions::new(cfg.bootstrap, cfg.seed) };
    Ok(Some(BootstrapBlock::from(&bootstrap_se_with(g, config, &opts)?)))
}

fn ls_block(s: &LsSolution) -> Result<EstimatorBlock> {
    Ok(EstimatorBlock {
        estimator: "least_squares".into(),
        t_hat: s.t_hat.counts(),
        shares: s.t_hat.shares().map(round_share),
        p_used: s.p_used,
        objective: Some(s.objective),
        log_likelihood: None,
        ties: s.ties.iter().map(|t| t.counts()).collect(),
        diagnostics: serde_json::to_value(&s.diagnostics)?,
        bootstrap: None,
    })
}

fn mle_block(r: &MleResult) -> Result<EstimatorBlock> {
    let mut ties: Vec<[u64; 4]> = r.ties.iter().map(|t| t.counts()).collect();
    if ties.is_empty() {
        ties.push(r.t_hat.counts());
    }
    Ok(EstimatorBlock {
        estimator: "mle".into(),
        t_hat: r.t_hat.counts(),
        shares: r.t_hat.shares().map(round_share),
        p_used: r.p_used,
        objective: None,
        log_likelihood: Some(r.log_likelihood),
        ties,
        diagnostics: serde_json::json!({
            "method": r.method,
            "converged": r.converged,
            "evaluations": r.evaluations,
        }),
        bootstrap: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli_io::render;

    fn inline(g: [u64; 4]) -> RunConfig {
        RunConfig::new(InputSource::Inline(GroupedData::new(g)))
    }

    #[test]
    fn p_mode_parsing() {
        assert_eq!("empirical".parse::<PMode>().unwrap(), PMode::Empirical);
        assert_eq!("estimate".parse::<PMode>().unwrap(), PMode::Estimate);
        assert_eq!("fixed=0.25".parse::<PMode>().unwrap(), PMode::Fixed(0.25));
        assert!("fixed=1".parse::<PMode>().is_err());
        assert!("fixed=abc".parse::<PMode>().is_err());
        assert!("0.5".parse::<PMode>().is_err());
        assert_eq!(PMode::Fixed(0.25).to_string().parse::<PMode>().unwrap(), PMode::Fixed(0.25));
    }

    #[test]
    fn toy_both_estimators_agree() {
        let cfg = RunConfig { estimator: EstimatorSelection::Both, p_mode: PMode::Fixed(0.5), ..inline([5, 0, 0, 5]) };
        let r = run_pipeline(&cfg).unwrap();
        assert_eq!(r.schema_version, SCHEMA_VERSION);
        assert_eq!(r.estimates.len(), 2);
        for e in &r.estimates {
            assert_eq!(e.t_hat, [0, 0, 10, 0], "{}", e.estimator);
            assert_eq!(e.shares, [0.0, 0.0, 1.0, 0.0]);
            assert!(e.bootstrap.is_none());
        }
    }

    #[test]
    fn bootstrap_block_only_when_requested() {
        let cfg = RunConfig { bootstrap: 5, restarts: Some(4), ..inline([6, 4, 3, 7]) };
        let r = run_pipeline(&cfg).unwrap();
        let b = r.estimates[0].bootstrap.as_ref().unwrap();
        assert_eq!(b.replications, 5);
        let json = render(&r, OutputFormat::Json).unwrap();
        assert!(json.contains("\"bootstrap\": {"));

        let r = run_pipeline(&RunConfig { restarts: Some(4), ..inline([6, 4, 3, 7]) }).unwrap();
        assert!(!render(&r, OutputFormat::Json).unwrap().contains("\"se_t\""));
    }

    #[test]
    fn rejects_invalid_configs() {
        assert!(run_pipeline(&RunConfig { bootstrap: 1, ..inline([1, 1, 1, 1]) }).is_err());
        assert!(run_pipeline(&RunConfig { restarts: Some(0), ..inline([1, 1, 1, 1]) }).is_err());
        assert!(run_pipeline(&RunConfig { p_mode: PMode::Fixed(0.0), ..inline([1, 1, 1, 1]) }).is_err());
        assert!(run_pipeline(&inline([0, 0, 0, 0])).is_err());
        // Empirical p needs both arms.
        assert!(run_pipeline(&inline([3, 0, 0, 0])).is_err());
        let r = run_pipeline(&RunConfig { p_mode: PMode::Fixed(0.5), ..inline([3, 0, 0, 0]) }).unwrap();
        assert!(r.baseline.is_none());
    }

    #[test]
    fn shares_sum_to_one_before_rounding() {
        let cfg = RunConfig { estimator: EstimatorSelection::Both, restarts: Some(4), ..inline([17, 23, 9, 31]) };
        let r = run_pipeline(&cfg).unwrap();
        for e in &r.estimates {
            let n: u64 = e.t_hat.iter().sum();
            let sum: f64 = e.t_hat.iter().map(|&c| c as f64 / n as f64).sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn reports_render_identically() {
        let cfg = RunConfig { estimator: EstimatorSelection::Both, p_mode: PMode::Estimate, restarts: Some(4), seed: 4, ..inline([12, 8, 5, 15]) };
        for format in [OutputFormat::Json, OutputFormat::Text] {
            let a = render(&run_pipeline(&cfg).unwrap(), format).unwrap();
            let b = render(&run_pipeline(&cfg).unwrap(), format).unwrap();
            assert_eq!(a, b);
        }
    }
}
