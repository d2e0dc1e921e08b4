//! First-stage estimate and strata shares implied by LATE monotonicity
//! (no defiers). Used as comparison output and as solver starting points.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{CountMatrix, GroupedData, TypeVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineShares {
    pub first_stage: f64,
    pub never_share: f64,
    pub defier_share: f64,
    pub complier_share: f64,
    pub always_share: f64,
    pub p_empirical: f64,
    /// Set when the first stage is negative, i.e. monotonicity cannot hold
    /// with this orientation of the instrument.
    pub monotonicity_violated: bool,
}

impl BaselineShares {
    /// Shares in type order `[never, defier, complier, always]`.
    pub fn as_array(&self) -> [f64; 4] {
        [self.never_share, self.defier_share, self.complier_share, self.always_share]
    }
}

/// Treated fraction in the intervention arm minus treated fraction in the
/// control arm.
pub fn first_stage(g: &GroupedData) -> Result<f64> {
    g.require_both_arms()?;
    let [g1, g2, g3, g4] = g.counts().map(|v| v as f64);
    Ok(g1 / (g1 + g2) - g3 / (g3 + g4))
}

pub fn monotonicity_shares(g: &GroupedData) -> Result<BaselineShares> {
    let fs = first_stage(g)?;
    let [g1, g2, g3, g4] = g.counts().map(|v| v as f64);
    Ok(BaselineShares {
        first_stage: fs,
        never_share: g2 / (g1 + g2),
        defier_share: 0.0,
        complier_share: fs,
        always_share: g3 / (g3 + g4),
        p_empirical: g.empirical_p()?,
        monotonicity_violated: fs < 0.0,
    })
}

/// Rounds `n * shares` to integers summing to `n` (Hamilton's method).
/// Shares are clamped to be nonnegative and renormalized first; remainder
/// ties go to the lower type index.
pub fn largest_remainder(shares: [f64; 4], n: u64) -> [u64; 4] {
    let clamped = shares.map(|s| if s.is_finite() { s.max(0.0) } else { 0.0 });
    let total: f64 = clamped.iter().sum();
    if total <= 0.0 {
        return [n, 0, 0, 0];
    }
    let quotas = clamped.map(|s| s / total * n as f64);
    let mut out = quotas.map(|q| q.floor() as u64);
    let assigned: u64 = out.iter().sum();
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned) as usize) {
        out[i] += 1;
    }
    out
}

/// Monotonicity shares as an integer type vector summing to `n`.
pub fn monotonicity_start(g: &GroupedData) -> Result<TypeVector> {
    let shares = monotonicity_shares(g)?;
    Ok(TypeVector::new(largest_remainder(shares.as_array(), g.total())))
}

/// A count matrix consistent with `g` that follows the monotonicity
/// decomposition: no defiers, compliers and always takers split the
/// intervention-treated cell, never takers and compliers split the
/// control-untreated cell. Always has positive likelihood.
pub fn monotonicity_matrix(g: &GroupedData) -> Result<CountMatrix> {
    let shares = monotonicity_shares(g)?;
    let [g1, g2, g3, g4] = g.counts();
    let arm1 = (g1 + g2) as f64;
    let arm0 = (g3 + g4) as f64;
    let always_in_intervention = (shares.always_share * arm1).round() as u64;
    let compliers_treated = g1.saturating_sub(always_in_intervention);
    let never_in_control = ((shares.never_share * arm0).round() as u64).min(g4);
    CountMatrix::from_splits(g, [compliers_treated, g2, 0, never_in_control])
}
