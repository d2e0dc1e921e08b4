//! Bootstrap standard errors: resample individuals with replacement (a
//! multinomial draw over the four observed cells), re-run an estimator on
//! each resample, and report the sample standard deviation of the estimates.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{check_open_unit, Error, Result};
use crate::least_squares::{ls_estimate, ls_estimate_free_p};
use crate::mle::{default_p_grid, mle_exact, mle_heuristic, mle_profile_p, DEFAULT_EXACT_CAP};
use crate::model::{GroupedData, TypeVector};
use crate::rng::replication_rng;

/// Estimator run on each resample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorConfig {
    LsFixed { p: f64, restarts: usize },
    LsEmpirical { restarts: usize },
    LsFreeP { restarts: usize },
    MleFixed { p: f64, restarts: usize },
    MleEmpirical { restarts: usize },
    MleProfile { restarts: usize },
}

impl EstimatorConfig {
    /// True when the estimator derives `p` from the data.
    pub fn estimates_p(&self) -> bool {
        !matches!(self, Self::LsFixed { .. } | Self::MleFixed { .. })
    }

    /// The fixed-`p` estimator of the same family.
    pub fn with_fixed_p(&self, p: f64) -> Self {
        match *self {
            Self::LsFixed { restarts, .. } | Self::LsEmpirical { restarts } | Self::LsFreeP { restarts } => {
                Self::LsFixed { p, restarts }
            }
            Self::MleFixed { restarts, .. } | Self::MleEmpirical { restarts } | Self::MleProfile { restarts } => {
                Self::MleFixed { p, restarts }
            }
        }
    }
}

/// Point estimate of one estimator run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicationEstimate {
    pub t: TypeVector,
    pub p: f64,
}

/// Runs `config` on `g`. MLE variants use exact enumeration up to
/// `DEFAULT_EXACT_CAP` participants and hill climbing beyond.
pub fn run_estimator(g: &GroupedData, config: &EstimatorConfig, seed: u64) -> Result<ReplicationEstimate> {
    let mle = |p: f64, restarts: usize| {
        if g.total() <= DEFAULT_EXACT_CAP {
            mle_exact(g, p)
        } else {
            mle_heuristic(g, p, seed, restarts)
        }
    };
    let (t, p) = match *config {
        EstimatorConfig::LsFixed { p, restarts } => {
            let s = ls_estimate(g, p, seed, restarts)?;
            (s.t_hat, s.p_used)
        }
        EstimatorConfig::LsEmpirical { restarts } => {
            let s = ls_estimate(g, g.empirical_p()?, seed, restarts)?;
            (s.t_hat, s.p_used)
        }
        EstimatorConfig::LsFreeP { restarts } => {
            let s = ls_estimate_free_p(g, seed, restarts)?;
            (s.t_hat, s.p_used)
        }
        EstimatorConfig::MleFixed { p, restarts } => {
            let r = mle(p, restarts)?;
            (r.t_hat, r.p_used)
        }
        EstimatorConfig::MleEmpirical { restarts } => {
            let r = mle(g.empirical_p()?, restarts)?;
            (r.t_hat, r.p_used)
        }
        EstimatorConfig::MleProfile { .. } => {
            let r = mle_profile_p(g, &default_p_grid(), seed)?;
            (r.t_hat, r.p_used)
        }
    };
    Ok(ReplicationEstimate { t, p })
}

/// How estimators that derive `p` from the data treat it in resamples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PHandling {
    /// Re-estimate `p` on every resample.
    #[default]
    Reestimate,
    /// Estimate `p` once on the original sample and hold it fixed.
    HoldAtOriginal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub replications: usize,
    pub seed: u64,
    pub p_handling: PHandling,
    pub keep_estimates: bool,
}

impl BootstrapOptions {
    pub fn new(replications: usize, seed: u64) -> Self {
        Self { replications, seed, p_handling: PHandling::default(), keep_estimates: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub replications: usize,
    pub failures: usize,
    pub p_handling: PHandling,
    pub se_t: [f64; 4],
    pub se_shares: [f64; 4],
    pub se_p: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimates: Option<Vec<ReplicationEstimate>>,
}

/// Draws `n` individuals with replacement from the observed cells.
pub fn resample(g: &GroupedData, seed: u64) -> Result<GroupedData> {
    resample_with(g, &mut replication_rng(seed, 0))
}

/// Multinomial draw as a chain of conditional binomials.
pub fn resample_with<R: Rng + ?Sized>(g: &GroupedData, rng: &mut R) -> Result<GroupedData> {
    g.require_nonempty()?;
    let counts = g.counts();
    let mut left = g.total();
    let mut mass = g.total();
    let mut out = [0u64; 4];
    for j in 0..3 {
        if left == 0 || mass == 0 {
            break;
        }
        let q = counts[j] as f64 / mass as f64;
        out[j] = Binomial::new(left, q.min(1.0))
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .sample(rng);
        left -= out[j];
        mass -= counts[j];
    }
    out[3] = left;
    Ok(GroupedData::new(out))
}

pub fn bootstrap_se(
    g: &GroupedData,
    config: &EstimatorConfig,
    replications: usize,
    seed: u64,
) -> Result<BootstrapReport> {
    bootstrap_se_with(g, config, &BootstrapOptions::new(replications, seed))
}

/// Replication `r` resamples from `replication_rng(seed, r)` and seeds its
/// estimator from the same stream, so results do not depend on scheduling.
pub fn bootstrap_se_with(g: &GroupedData, config: &EstimatorConfig, opts: &BootstrapOptions) -> Result<BootstrapReport> {
    if opts.replications < 2 {
        return Err(Error::InvalidArgument("bootstrap needs at least 2 replications".into()));
    }
    g.require_nonempty()?;
    match *config {
        EstimatorConfig::LsFixed { p, .. } | EstimatorConfig::MleFixed { p, .. } => {
            check_open_unit(p)?;
        }
        _ => {}
    }
    let config = match opts.p_handling {
        PHandling::HoldAtOriginal if config.estimates_p() => {
            let original = run_estimator(g, config, opts.seed)?;
            config.with_fixed_p(original.p)
        }
        _ => *config,
    };

    let outcomes = run_replications(g, &config, opts);
    let total = outcomes.len();
    let estimates: Vec<ReplicationEstimate> = outcomes.into_iter().flatten().collect();
    let failures = total - estimates.len();
    if failures * 10 > total {
        return Err(Error::BootstrapFailures { failed: failures, total });
    }
    if estimates.len() < 2 {
        return Err(Error::BootstrapFailures { failed: failures, total });
    }

    let column = |f: &dyn Fn(&ReplicationEstimate) -> f64| sample_sd(&estimates.iter().map(f).collect::<Vec<_>>());
    let se_t = [0, 1, 2, 3].map(|i| column(&|e| e.t.counts()[i] as f64));
    let se_shares = [0, 1, 2, 3].map(|i| column(&|e| e.t.shares()[i]));
    let se_p = column(&|e| e.p);

    Ok(BootstrapReport {
        replications: total,
        failures,
        p_handling: opts.p_handling,
        se_t,
        se_shares,
        se_p,
        estimates: opts.keep_estimates.then_some(estimates),
    })
}

fn replicate(g: &GroupedData, config: &EstimatorConfig, seed: u64, r: u64) -> Option<ReplicationEstimate> {
    let mut rng = replication_rng(seed, r);
    let sample = resample_with(g, &mut rng).ok()?;
    let estimator_seed: u64 = rng.random();
    run_estimator(&sample, config, estimator_seed).ok()
}

#[cfg(feature = "parallel")]
fn run_replications(g: &GroupedData, config: &EstimatorConfig, opts: &BootstrapOptions) -> Vec<Option<ReplicationEstimate>> {
    use rayon::prelude::*;
    (0..opts.replications as u64)
        .into_par_iter()
        .map(|r| replicate(g, config, opts.seed, r))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn run_replications(g: &GroupedData, config: &EstimatorConfig, opts: &BootstrapOptions) -> Vec<Option<ReplicationEstimate>> {
    (0..opts.replications as u64).map(|r| replicate(g, config, opts.seed, r)).collect()
}

/// Sample standard deviation (divisor `k - 1`), summed in index order.
/// Exactly 0 when all values are equal.
pub(crate) fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 || values.iter().all(|&v| v == values[0]) {
        return 0.0;
    }
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / (k - 1.0)).sqrt()
}
