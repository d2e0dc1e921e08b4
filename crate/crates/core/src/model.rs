//! Domain types and the exact probability of the grouped data.
//!
//! Participants of four latent types are assigned to the intervention arm by
//! independent Bernoulli(p) draws. Each type lands in exactly one observed
//! (Z, D) cell per arm, so the observed cell counts are sums of four
//! independent binomials. The probability of a cell vector given the type
//! vector is a one-dimensional convolution over the number of never takers
//! assigned to the intervention arm.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{check_open_unit, Error, Result};

/// Observed cell counts `[g1, g2, g3, g4]`.
///
/// | cell | Z | D |
/// |------|---|---|
/// | g1   | 1 | 1 |
/// | g2   | 1 | 0 |
/// | g3   | 0 | 1 |
/// | g4   | 0 | 0 |
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupedData([u64; 4]);

impl GroupedData {
    pub const fn new(counts: [u64; 4]) -> Self {
        Self(counts)
    }

    /// Builds from signed counts, rejecting negatives.
    pub fn try_from_signed(counts: [i64; 4]) -> Result<Self> {
        let mut out = [0u64; 4];
        for (o, &c) in out.iter_mut().zip(&counts) {
            *o = u64::try_from(c).map_err(|_| Error::NegativeCount(c))?;
        }
        Ok(Self(out))
    }

    pub const fn counts(&self) -> [u64; 4] {
        self.0
    }

    /// Count in cell `j` (1-based, matching the usual g(1)..g(4) labels).
    pub fn cell(&self, j: usize) -> u64 {
        self.0[j - 1]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    /// Participants assigned to the intervention arm (Z = 1).
    pub fn intervention_total(&self) -> u64 {
        self.0[0] + self.0[1]
    }

    /// Participants assigned to the control arm (Z = 0).
    pub fn control_total(&self) -> u64 {
        self.0[2] + self.0[3]
    }

    /// Empirical fraction assigned to the intervention arm.
    pub fn empirical_p(&self) -> Result<f64> {
        self.require_both_arms()?;
        Ok(self.intervention_total() as f64 / self.total() as f64)
    }

    pub(crate) fn require_nonempty(&self) -> Result<()> {
        if self.total() == 0 {
            Err(Error::EmptyData)
        } else {
            Ok(())
        }
    }

    pub(crate) fn require_both_arms(&self) -> Result<()> {
        self.require_nonempty()?;
        if self.intervention_total() == 0 {
            return Err(Error::EmptyArm { arm: "intervention" });
        }
        if self.control_total() == 0 {
            return Err(Error::EmptyArm { arm: "control" });
        }
        Ok(())
    }
}

impl fmt::Display for GroupedData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.0;
        write!(f, "({a}, {b}, {c}, {d})")
    }
}

/// Latent type counts `[never takers, defiers, compliers, always takers]`.
///
/// The derived ordering is lexicographic in that order and is used as the
/// tie-breaking order by the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TypeVector([u64; 4]);

impl TypeVector {
    pub const fn new(counts: [u64; 4]) -> Self {
        Self(counts)
    }

    pub const fn counts(&self) -> [u64; 4] {
        self.0
    }

    pub fn never_takers(&self) -> u64 {
        self.0[0]
    }

    pub fn defiers(&self) -> u64 {
        self.0[1]
    }

    pub fn compliers(&self) -> u64 {
        self.0[2]
    }

    pub fn always_takers(&self) -> u64 {
        self.0[3]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    /// Type shares of the total; all zero for an empty vector.
    pub fn shares(&self) -> [f64; 4] {
        let n = self.total();
        if n == 0 {
            return [0.0; 4];
        }
        self.0.map(|c| c as f64 / n as f64)
    }
}

impl fmt::Display for TypeVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.0;
        write!(f, "({a}, {b}, {c}, {d})")
    }
}

/// Column (0-based) holding type `i`'s participants assigned to intervention.
pub const INTERVENTION_CELL: [usize; 4] = [1, 1, 0, 0];
/// Column (0-based) holding type `i`'s participants assigned to control.
pub const CONTROL_CELL: [usize; 4] = [3, 2, 3, 2];

/// Type-by-cell counts. Rows are types, columns are observed cells; eight
/// cells are structurally zero because each type maps to one cell per arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CountMatrix([[u64; 4]; 4]);

impl CountMatrix {
    pub const ZERO: CountMatrix = CountMatrix([[0; 4]; 4]);

    /// Builds a matrix, rejecting nonzero structural cells.
    pub fn new(cells: [[u64; 4]; 4]) -> Result<Self> {
        for (i, row) in cells.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0 && j != INTERVENTION_CELL[i] && j != CONTROL_CELL[i] {
                    return Err(Error::InvalidArgument(format!(
                        "cell N({},{}) must be zero, got {v}",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(Self(cells))
    }

    /// Builds the matrix from each type's intervention and control counts.
    pub fn from_arms(intervention: [u64; 4], control: [u64; 4]) -> Self {
        let mut cells = [[0u64; 4]; 4];
        for i in 0..4 {
            cells[i][INTERVENTION_CELL[i]] = intervention[i];
            cells[i][CONTROL_CELL[i]] = control[i];
        }
        Self(cells)
    }

    /// Builds the matrix consistent with `g` from the four free splits
    /// `[N(3,1), N(1,2), N(2,3), N(1,4)]`; each split must not exceed its cell.
    pub fn from_splits(g: &GroupedData, splits: [u64; 4]) -> Result<Self> {
        let [g1, g2, g3, g4] = g.counts();
        let [a, b, c, d] = splits;
        if a > g1 || b > g2 || c > g3 || d > g4 {
            return Err(Error::InvalidArgument(format!(
                "splits {splits:?} exceed cell counts {g}"
            )));
        }
        Ok(Self::from_arms([b, g2 - b, a, g1 - a], [d, c, g4 - d, g3 - c]))
    }

    /// The four free splits `[N(3,1), N(1,2), N(2,3), N(1,4)]`.
    pub fn splits(&self) -> [u64; 4] {
        let n = &self.0;
        [n[2][0], n[0][1], n[1][2], n[0][3]]
    }

    pub fn cells(&self) -> &[[u64; 4]; 4] {
        &self.0
    }

    /// N(i, j) with 1-based indices.
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.0[i - 1][j - 1]
    }

    pub fn row_sums(&self) -> TypeVector {
        TypeVector(self.0.map(|row| row.iter().sum()))
    }

    pub fn column_sums(&self) -> GroupedData {
        let mut g = [0u64; 4];
        for row in &self.0 {
            for (gj, v) in g.iter_mut().zip(row) {
                *gj += v;
            }
        }
        GroupedData(g)
    }

    /// Per-type count assigned to intervention: N(i,1) + N(i,2).
    pub fn intervention_counts(&self) -> [u64; 4] {
        self.0.map(|row| row[0] + row[1])
    }
}

/// How the assignment probability is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "p")]
pub enum DesignParams {
    /// Known design probability, strictly inside (0, 1).
    Fixed(f64),
    /// Plug in the empirical intervention fraction, then estimate types.
    EstimateEmpirical,
    /// Estimate p jointly with the types.
    EstimateJoint,
}

impl DesignParams {
    pub fn fixed(p: f64) -> Result<Self> {
        check_open_unit(p).map(Self::Fixed)
    }
}

/// A natural-log probability; probability zero is `-inf`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LogProb(f64);

impl LogProb {
    pub const ZERO: LogProb = LogProb(f64::NEG_INFINITY);
    pub const ONE: LogProb = LogProb(0.0);

    pub fn from_ln(v: f64) -> Self {
        debug_assert!(v <= 1e-9 || v.is_nan(), "log-probability {v} above zero");
        Self(v)
    }

    pub fn ln(self) -> f64 {
        self.0
    }

    pub fn prob(self) -> f64 {
        self.0.exp()
    }

    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }
}

fn ln_factorial(m: u64) -> f64 {
    if m < 2 {
        0.0
    } else {
        ln_gamma(m as f64 + 1.0)
    }
}

/// Log binomial pmf, `ln[C(r,k) p^k (1-p)^(r-k)]`.
pub fn log_binom_pmf(k: i64, r: i64, p: f64) -> Result<LogProb> {
    check_open_unit(p)?;
    if r < 0 {
        return Err(Error::InvalidArgument(format!("binomial size r = {r} is negative")));
    }
    if k < 0 || k > r {
        return Ok(LogProb::ZERO);
    }
    let (k, r) = (k as u64, r as u64);
    let v = ln_factorial(r) - ln_factorial(k) - ln_factorial(r - k)
        + k as f64 * p.ln()
        + (r - k) as f64 * (-p).ln_1p();
    Ok(LogProb(v.min(0.0)))
}

/// Range of never takers assigned to intervention (`ℓ`) for which all four
/// binomial terms of the convolution are in support. `None` when empty.
pub fn feasible_ell_range(t: &TypeVector, g: &GroupedData) -> Option<RangeInclusive<u64>> {
    let [t1, t2, t3, t4] = t.counts().map(|v| v as i64);
    let [g1, g2, _, g4] = g.counts().map(|v| v as i64);
    let s = t1 + t3 - g1 - g4;
    let lo = 0.max(g2 - t2).max(t1 - g4).max(s);
    let hi = t1.min(g2).min(t1 + t3 - g4).min(s + t4);
    (lo <= hi).then_some(lo as u64..=hi as u64)
}

/// Ranges wider than this are summed around the mode only.
const FULL_SUM_WIDTH: u64 = 1024;
/// Terms further than this below the largest term (in nats) are dropped;
/// e^-64 times any feasible range width is far below double precision.
const TAIL_CUTOFF: f64 = 64.0;

/// Evaluates the grouped-data log-likelihood for a fixed `p`, optionally
/// with a precomputed log-factorial table.
#[derive(Debug, Clone)]
pub struct LikelihoodKernel {
    p: f64,
    ln_p: f64,
    ln_q: f64,
    ln_fact: Vec<f64>,
}

impl LikelihoodKernel {
    pub fn new(p: f64) -> Result<Self> {
        Self::with_table(p, 0)
    }

    /// Caches `ln k!` for `k <= max_n`; values are identical to the uncached path.
    pub fn with_table(p: f64, max_n: u64) -> Result<Self> {
        check_open_unit(p)?;
        let ln_fact = (0..=max_n).map(ln_factorial).collect();
        Ok(Self {
            p,
            ln_p: p.ln(),
            ln_q: (-p).ln_1p(),
            ln_fact,
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    fn ln_fact(&self, m: u64) -> f64 {
        match self.ln_fact.get(m as usize) {
            Some(&v) => v,
            None => ln_factorial(m),
        }
    }

    /// `ln binom(k, r, p)` for `0 <= k <= r`.
    fn ln_binom(&self, k: u64, r: u64) -> f64 {
        self.ln_fact(r) - self.ln_fact(k) - self.ln_fact(r - k)
            + k as f64 * self.ln_p
            + (r - k) as f64 * self.ln_q
    }

    /// One summand of the convolution; `ell` must be in the feasible range.
    fn term(&self, t: [u64; 4], g: [u64; 4], ell: u64) -> f64 {
        let [t1, t2, t3, t4] = t;
        let [g1, g2, _, g4] = g;
        self.ln_binom(ell, t1)
            + self.ln_binom(g2 - ell, t2)
            + self.ln_binom(t1 + t3 - g4 - ell, t3)
            + self.ln_binom(g1 + g4 + ell - t1 - t3, t4)
    }

    /// `ln P(G = g | t, p)`.
    pub fn log_prob(&self, t: &TypeVector, g: &GroupedData) -> LogProb {
        if t.total() != g.total() {
            return LogProb::ZERO;
        }
        let Some(range) = feasible_ell_range(t, g) else {
            return LogProb::ZERO;
        };
        let (tc, gc) = (t.counts(), g.counts());
        let (lo, hi) = (*range.start(), *range.end());

        let (lo, hi, max) = if hi - lo < FULL_SUM_WIDTH {
            let max = (lo..=hi).map(|l| self.term(tc, gc, l)).fold(f64::NEG_INFINITY, f64::max);
            (lo, hi, max)
        } else {
            // The summand is log-concave in ell: locate the mode, then keep
            // the terms within the cutoff on either side.
            let (mut a, mut b) = (lo, hi);
            while a < b {
                let mid = a + (b - a) / 2;
                if self.term(tc, gc, mid + 1) > self.term(tc, gc, mid) {
                    a = mid + 1;
                } else {
                    b = mid;
                }
            }
            let max = self.term(tc, gc, a);
            let floor = max - TAIL_CUTOFF;
            let mut left = a;
            while left > lo && self.term(tc, gc, left - 1) >= floor {
                left -= 1;
            }
            let mut right = a;
            while right < hi && self.term(tc, gc, right + 1) >= floor {
                right += 1;
            }
            (left, right, max)
        };

        let sum: f64 = (lo..=hi).map(|l| (self.term(tc, gc, l) - max).exp()).sum();
        LogProb((max + sum.ln()).min(0.0))
    }
}

/// `ln P(G = g | t, p)`; probability zero when the totals disagree or no
/// assignment of never takers is consistent with `g`.
pub fn log_data_probability(t: &TypeVector, g: &GroupedData, p: f64) -> Result<LogProb> {
    Ok(LikelihoodKernel::new(p)?.log_prob(t, g))
}

pub const DEFAULT_ENUMERATION_CAP: u64 = 20;

/// Exact distribution of `G` by enumerating every assignment vector of the
/// `n = Σt` participants. Exponential in `n`; intended as a test oracle.
pub fn enumerate_distribution(t: &TypeVector, p: f64) -> Result<BTreeMap<GroupedData, f64>> {
    enumerate_distribution_capped(t, p, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_distribution_capped(
    t: &TypeVector,
    p: f64,
    cap: u64,
) -> Result<BTreeMap<GroupedData, f64>> {
    check_open_unit(p)?;
    let n = t.total();
    if n > cap {
        return Err(Error::TooLarge { what: "assignment enumeration", n, cap });
    }
    let types: Vec<usize> = t
        .counts()
        .iter()
        .enumerate()
        .flat_map(|(i, &c)| std::iter::repeat_n(i, c as usize))
        .collect();
    let n = types.len();
    let p_pow: Vec<f64> = (0..=n).map(|k| p.powi(k as i32)).collect();
    let q_pow: Vec<f64> = (0..=n).map(|k| (1.0 - p).powi(k as i32)).collect();

    let mut dist: HashMap<[u64; 4], f64> = HashMap::new();
    for mask in 0u64..(1u64 << n) {
        let mut g = [0u64; 4];
        for (bit, &ty) in types.iter().enumerate() {
            let cell = if mask >> bit & 1 == 1 {
                INTERVENTION_CELL[ty]
            } else {
                CONTROL_CELL[ty]
            };
            g[cell] += 1;
        }
        let k = mask.count_ones() as usize;
        *dist.entry(g).or_insert(0.0) += p_pow[k] * q_pow[n - k];
    }
    Ok(dist.into_iter().map(|(g, pr)| (GroupedData(g), pr)).collect())
}

/// All cell vectors with the given total, in lexicographic order.
pub fn grouped_data_with_total(n: u64) -> impl Iterator<Item = GroupedData> {
    (0..=n).flat_map(move |a| {
        (0..=n - a).flat_map(move |b| {
            (0..=n - a - b).map(move |c| GroupedData([a, b, c, n - a - b - c]))
        })
    })
}

/// All type vectors with the given total, in lexicographic order.
pub fn type_vectors_with_total(n: u64) -> impl Iterator<Item = TypeVector> {
    grouped_data_with_total(n).map(|g| TypeVector(g.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 1e-12;

    fn tv(c: [u64; 4]) -> TypeVector {
        TypeVector::new(c)
    }

    fn gd(c: [u64; 4]) -> GroupedData {
        GroupedData::new(c)
    }

    #[test]
    fn binom_pmf_examples() {
        assert!(log_binom_pmf(0, 0, 0.5).unwrap().ln().abs() < EPS);
        assert!((log_binom_pmf(1, 2, 0.5).unwrap().ln() - 0.5f64.ln()).abs() < EPS);
        assert!(log_binom_pmf(5, 3, 0.4).unwrap().is_zero());
        assert!(log_binom_pmf(-1, 3, 0.4).unwrap().is_zero());
    }

    #[test]
    fn binom_pmf_rejects_bad_arguments() {
        assert!(matches!(log_binom_pmf(0, 1, 0.0), Err(Error::InvalidProbability(_))));
        assert!(matches!(log_binom_pmf(0, 1, 1.0), Err(Error::InvalidProbability(_))));
        assert!(log_binom_pmf(0, 1, f64::NAN).is_err());
        assert!(matches!(log_binom_pmf(0, -1, 0.5), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn ell_range_examples() {
        assert_eq!(feasible_ell_range(&tv([1, 1, 1, 1]), &gd([1, 1, 1, 1])), Some(0..=1));
        assert_eq!(feasible_ell_range(&tv([1, 0, 0, 0]), &gd([0, 1, 0, 0])), Some(1..=1));
        assert_eq!(feasible_ell_range(&tv([2, 0, 0, 0]), &gd([0, 0, 0, 3])), None);
    }

    #[test]
    fn data_probability_examples() {
        let lp = log_data_probability(&tv([1, 0, 0, 0]), &gd([0, 1, 0, 0]), 0.5).unwrap();
        assert!((lp.ln() - 0.5f64.ln()).abs() < EPS);
        let lp = log_data_probability(&tv([0, 0, 1, 0]), &gd([1, 0, 0, 0]), 0.3).unwrap();
        assert!((lp.ln() - 0.3f64.ln()).abs() < EPS);
        // 2 of the 16 equally likely assignments produce (1,1,1,1).
        let lp = log_data_probability(&tv([1, 1, 1, 1]), &gd([1, 1, 1, 1]), 0.5).unwrap();
        assert!((lp.ln() - 0.125f64.ln()).abs() < EPS);
    }

    #[test]
    fn mismatched_totals_have_probability_zero() {
        let lp = log_data_probability(&tv([1, 1, 0, 0]), &gd([0, 1, 0, 0]), 0.5).unwrap();
        assert!(lp.is_zero());
        assert!(log_data_probability(&tv([1, 0, 0, 0]), &gd([0, 1, 0, 0]), 1.0).is_err());
    }

    #[test]
    fn enumeration_examples() {
        let d = enumerate_distribution(&tv([1, 0, 0, 0]), 0.5).unwrap();
        assert_eq!(d.len(), 2);
        assert!((d[&gd([0, 1, 0, 0])] - 0.5).abs() < EPS);
        assert!((d[&gd([0, 0, 0, 1])] - 0.5).abs() < EPS);

        let d = enumerate_distribution(&tv([0, 0, 0, 0]), 0.37).unwrap();
        assert_eq!(d.len(), 1);
        assert!((d[&gd([0, 0, 0, 0])] - 1.0).abs() < EPS);

        let d = enumerate_distribution(&tv([1, 1, 1, 1]), 0.5).unwrap();
        assert!((d[&gd([1, 1, 1, 1])] - 0.125).abs() < EPS);
    }

    #[test]
    fn enumeration_respects_cap() {
        let err = enumerate_distribution(&tv([10, 6, 5, 0]), 0.5).unwrap_err();
        assert!(matches!(err, Error::TooLarge { n: 21, cap: 20, .. }));
    }

    #[test]
    fn pruned_sum_matches_full_sum() {
        // Wide ell range: exercises the mode search and tail cutoff.
        let t = tv([6000, 2500, 3000, 2000]);
        let g = gd([2500, 4300, 3200, 3500]);
        let kernel = LikelihoodKernel::with_table(0.47, 20_000).unwrap();
        let pruned = kernel.log_prob(&t, &g).ln();
        let range = feasible_ell_range(&t, &g).unwrap();
        assert!(range.end() - range.start() >= FULL_SUM_WIDTH);
        let terms: Vec<f64> = range.map(|l| kernel.term(t.counts(), g.counts(), l)).collect();
        let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let full = max + terms.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        assert!((pruned - full).abs() < 1e-12, "{pruned} vs {full}");
    }

    #[test]
    fn table_and_direct_paths_agree_bitwise() {
        let t = tv([40, 10, 30, 20]);
        let g = gd([27, 26, 14, 33]);
        let direct = log_data_probability(&t, &g, 0.5).unwrap();
        let cached = LikelihoodKernel::with_table(0.5, 100).unwrap().log_prob(&t, &g);
        assert_eq!(direct.ln().to_bits(), cached.ln().to_bits());
    }

    #[test]
    fn splits_round_trip() {
        let g = gd([5, 7, 3, 9]);
        let m = CountMatrix::from_splits(&g, [2, 3, 1, 4]).unwrap();
        assert_eq!(m.column_sums(), g);
        assert_eq!(m.splits(), [2, 3, 1, 4]);
        assert_eq!(m.row_sums(), tv([3 + 4, 4 + 1, 2 + 5, 3 + 2]));
        assert!(CountMatrix::from_splits(&g, [6, 0, 0, 0]).is_err());
    }

    #[test]
    fn count_matrix_rejects_structural_cells() {
        let mut cells = [[0u64; 4]; 4];
        cells[0][0] = 1;
        assert!(CountMatrix::new(cells).is_err());
        cells[0][0] = 0;
        cells[0][1] = 1;
        assert!(CountMatrix::new(cells).is_ok());
    }

    #[test]
    fn empty_arm_detection() {
        assert!(gd([3, 0, 0, 0]).empirical_p().is_err());
        assert!(gd([0, 0, 0, 0]).require_nonempty().is_err());
        assert!((gd([1, 1, 1, 1]).empirical_p().unwrap() - 0.5).abs() < EPS);
    }

    #[test]
    fn simplex_iterators() {
        // C(n+3, 3) points.
        assert_eq!(grouped_data_with_total(10).count(), 286);
        assert_eq!(type_vectors_with_total(0).count(), 1);
        assert!(grouped_data_with_total(4).all(|g| g.total() == 4));
    }
}
