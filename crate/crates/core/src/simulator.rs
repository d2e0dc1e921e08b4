//! Draws data from the generative model: each participant is assigned to
//! the intervention arm by an independent Bernoulli(p) draw.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CountMatrix, GroupedData, TypeVector};
use crate::rng::replication_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub t: TypeVector,
    pub p: f64,
    pub seed: u64,
    pub replications: u64,
}

fn check_closed_unit(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidProbability(p))
    }
}

/// Draws one count matrix. Binomial variates come from `rand_distr`
/// (inversion for small means, BTPE rejection otherwise) on a ChaCha8
/// stream, so a seed reproduces across platforms.
pub fn draw_matrix<R: Rng + ?Sized>(t: &TypeVector, p: f64, rng: &mut R) -> Result<CountMatrix> {
    check_closed_unit(p)?;
    let counts = t.counts();
    let mut intervention = [0u64; 4];
    for (k, &n) in intervention.iter_mut().zip(&counts) {
        *k = Binomial::new(n, p)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .sample(rng);
    }
    let control = [0, 1, 2, 3].map(|i| counts[i] - intervention[i]);
    Ok(CountMatrix::from_arms(intervention, control))
}

/// One draw; identical to replication 0 of [`simulate_grouped`] with the same seed.
pub fn simulate_once(t: &TypeVector, p: f64, seed: u64) -> Result<CountMatrix> {
    draw_matrix(t, p, &mut replication_rng(seed, 0))
}

/// Column sums of `replications` independent draws, in replication order.
pub fn simulate_grouped(cfg: &SimConfig) -> Result<Vec<GroupedData>> {
    if cfg.replications == 0 {
        return Err(Error::InvalidArgument("replications must be at least 1".into()));
    }
    check_closed_unit(cfg.p)?;
    (0..cfg.replications)
        .map(|r| {
            draw_matrix(&cfg.t, cfg.p, &mut replication_rng(cfg.seed, r)).map(|m| m.column_sums())
        })
        .collect()
}
