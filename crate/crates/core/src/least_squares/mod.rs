//! Least-squares estimator: choose the count matrix whose per-subset
//! randomization errors (actual minus intended intervention count) are
//! smallest, each squared error weighted by its variance under the design.
//!
//! The column totals and structural zeros leave four free integers, the
//! splits `[N(3,1), N(1,2), N(2,3), N(1,4)]`. The search runs in three
//! stages:
//!
//! 1. multi-start projected descent on the continuous relaxation;
//! 2. recentring the relaxed solution along the direction that leaves all
//!    randomization errors unchanged, so that a degenerate (segment-shaped)
//!    optimum is represented by its most interior point;
//! 3. integer local search in a trust region around that anchor, seeded by
//!    roundings along the degenerate direction and by random points.

mod relax;
mod search;

use serde::{Deserialize, Serialize};

use crate::baseline::monotonicity_matrix;
use crate::error::{check_open_unit, Error, Result};
use crate::golden::golden_min;
use crate::model::{CountMatrix, GroupedData, TypeVector};
use relax::{start_points, weighted_error, Relaxed};
use search::{insert_best, tied, Candidate, IntegerSearch};

pub const DEFAULT_RESTARTS: usize = 64;
pub const DEFAULT_TRUST_RADIUS: u64 = 32;
/// Trust regions with at most this many integer points are searched
/// exhaustively.
pub const EXHAUSTIVE_LIMIT: u128 = 1 << 18;

/// Nonempty subset of the four types, as a bitmask (bit `i-1` for type `i`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubsetId(u8);

/// Subsets ordered by size, then lexicographically.
pub(crate) const SUBSET_MASKS: [u8; 15] = [
    0b0001, 0b0010, 0b0100, 0b1000, // singletons
    0b0011, 0b0101, 0b1001, 0b0110, 0b1010, 0b1100, // pairs
    0b0111, 0b1011, 0b1101, 0b1110, // triples
    0b1111,
];

impl SubsetId {
    /// Builds from 1-based type labels.
    pub fn from_types(types: &[usize]) -> Result<Self> {
        let mut mask = 0u8;
        for &i in types {
            if !(1..=4).contains(&i) {
                return Err(Error::InvalidArgument(format!("type label {i} outside 1..=4")));
            }
            mask |= 1 << (i - 1);
        }
        if mask == 0 {
            return Err(Error::InvalidArgument("subset must be nonempty".into()));
        }
        Ok(Self(mask))
    }

    pub fn mask(self) -> u8 {
        self.0
    }

    /// Member type labels, 1-based and ascending.
    pub fn types(self) -> Vec<usize> {
        (1..=4).filter(|i| self.contains(*i)).collect()
    }

    pub fn contains(self, i: usize) -> bool {
        (1..=4).contains(&i) && self.0 >> (i - 1) & 1 == 1
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

/// The 15 nonempty subsets, by size then lexicographic.
pub fn enumerate_subsets() -> Vec<SubsetId> {
    SUBSET_MASKS.iter().map(|&m| SubsetId(m)).collect()
}

/// Actual minus intended intervention count within subset `subset`.
pub fn randomization_error(n: &CountMatrix, subset: SubsetId, p: f64) -> f64 {
    let x = n.intervention_counts();
    let t = n.row_sums().counts();
    let (mut xs, mut ts) = (0u64, 0u64);
    for i in 0..4 {
        if subset.contains(i + 1) {
            xs += x[i];
            ts += t[i];
        }
    }
    xs as f64 - p * ts as f64
}

/// Sum over the nonempty subsets of squared randomization error divided by
/// its variance `p(1-p)Σt`; subsets without participants contribute 0.
pub fn objective_s(n: &CountMatrix, p: f64) -> Result<f64> {
    check_open_unit(p)?;
    let x = n.intervention_counts().map(|v| v as f64);
    let t = n.row_sums().counts().map(|v| v as f64);
    Ok(weighted_error(&x, &t, p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsOptions {
    /// Relaxation starts, and also the number of random integer starts.
    pub restarts: usize,
    pub seed: u64,
    /// Half-width of the integer search box around the anchor, per split.
    pub trust_radius: u64,
}

impl Default for LsOptions {
    fn default() -> Self {
        Self { restarts: DEFAULT_RESTARTS, seed: 0, trust_radius: DEFAULT_TRUST_RADIUS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsDiagnostics {
    pub relaxed_starts: usize,
    pub relaxed_iterations: usize,
    pub relaxed_objective: f64,
    /// Relaxed splits the integer search is centred on.
    pub anchor: [f64; 4],
    pub trust_radius: u64,
    pub integer_starts: usize,
    pub local_moves: u64,
    pub evaluations: u64,
    /// Number of `p` values probed (free-p variant only).
    pub p_probes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsSolution {
    pub n_hat: CountMatrix,
    pub t_hat: TypeVector,
    pub p_used: f64,
    pub objective: f64,
    pub diagnostics: LsDiagnostics,
    /// Distinct type vectors found with an objective tied to the optimum,
    /// including `t_hat`, in lexicographic order.
    pub ties: Vec<TypeVector>,
}

/// Least-squares estimate for a known `p`.
pub fn ls_estimate(g: &GroupedData, p: f64, seed: u64, restarts: usize) -> Result<LsSolution> {
    ls_estimate_with(g, p, &LsOptions { restarts, seed, ..Default::default() })
}

pub fn ls_estimate_with(g: &GroupedData, p: f64, opts: &LsOptions) -> Result<LsSolution> {
    check_open_unit(p)?;
    g.require_nonempty()?;
    if opts.restarts == 0 {
        return Err(Error::InvalidArgument("restarts must be at least 1".into()));
    }
    let n = g.total();
    let relaxed = Relaxed::new(g.counts(), p);

    // Stage 1: relaxation.
    let baseline = if g.intervention_total() > 0 && g.control_total() > 0 {
        monotonicity_matrix(g)?.splits().map(|v| v as f64)
    } else {
        relaxed.g.map(|v| v / 2.0)
    };
    let starts = start_points(&relaxed.g, baseline, opts.restarts);
    let mut best_relaxed: Option<relax::Descent> = None;
    let mut relaxed_iterations = 0;
    for s in &starts {
        let d = relaxed.descend(*s);
        relaxed_iterations += d.iterations;
        if best_relaxed.as_ref().is_none_or(|b| d.value < b.value) {
            best_relaxed = Some(d);
        }
    }
    let best_relaxed = best_relaxed.expect("at least one start");

    // Stage 2: centre on the (possibly degenerate) optimal face. Objective
    // differences below that of a quarter-count error in the whole sample
    // are below integer resolution.
    let resolution = 0.25 / (p * (1.0 - p) * n as f64);
    let (anchor, relaxed_objective) = relaxed.center_on_face(best_relaxed.x, resolution);

    // Stage 3: integer search.
    let radius = opts.trust_radius;
    let v = relaxed.null_direction();
    let mut search = IntegerSearch::new(g, p, anchor, radius);
    let (pool, integer_starts) = if search.box_size() <= EXHAUSTIVE_LIMIT {
        (search.exhaustive(), 0)
    } else {
        let mut seeds = search.scan_line(anchor, v, radius, 8);
        for s in search.seeded_starts(opts.seed, opts.restarts) {
            seeds.push(search.evaluate(s));
        }
        let count = seeds.len();
        let mut pool: Vec<Candidate> = Vec::new();
        for s in seeds {
            let c = search.polish(s.splits, v);
            insert_best(&mut pool, c, usize::MAX);
        }
        (pool, count)
    };
    let winner = pool[0];
    let mut ties: Vec<TypeVector> = pool
        .iter()
        .filter(|c| tied(c.objective, winner.objective))
        .map(|c| c.t)
        .collect();
    ties.sort();
    ties.dedup();

    let n_hat = search.matrix(g, &winner);
    Ok(LsSolution {
        n_hat,
        t_hat: winner.t,
        p_used: p,
        objective: objective_s(&n_hat, p)?,
        diagnostics: LsDiagnostics {
            relaxed_starts: starts.len(),
            relaxed_iterations,
            relaxed_objective,
            anchor,
            trust_radius: radius,
            integer_starts,
            local_moves: search.moves,
            evaluations: search.evaluations,
            p_probes: 0,
        },
        ties,
    })
}

/// Number of evenly spaced `p` values probed before golden-section refinement.
const FREE_P_GRID: usize = 17;

/// Least-squares estimate with `p` estimated too: a one-dimensional search
/// over `p ∈ [1/n, 1-1/n]` with the integer problem re-solved at each probe.
/// A coarse grid (plus the empirical fraction) brackets the minimum, then
/// golden-section search refines it. Ties go to the `p` closest to the
/// empirical fraction.
pub fn ls_estimate_free_p(g: &GroupedData, seed: u64, restarts: usize) -> Result<LsSolution> {
    ls_estimate_free_p_with(g, &LsOptions { restarts, seed, ..Default::default() })
}

pub fn ls_estimate_free_p_with(g: &GroupedData, opts: &LsOptions) -> Result<LsSolution> {
    let p_emp = g.empirical_p()?;
    let n = g.total() as f64;
    let (lo, hi) = (1.0 / n, 1.0 - 1.0 / n);

    let mut probes: Vec<LsSolution> = Vec::new();
    let solve = |p: f64, probes: &mut Vec<LsSolution>| -> Result<f64> {
        if let Some(s) = probes.iter().find(|s| s.p_used == p) {
            return Ok(s.objective);
        }
        let s = ls_estimate_with(g, p, opts)?;
        let obj = s.objective;
        probes.push(s);
        Ok(obj)
    };

    solve(p_emp, &mut probes)?;
    let grid: Vec<f64> = if hi > lo {
        (0..FREE_P_GRID).map(|k| lo + (hi - lo) * k as f64 / (FREE_P_GRID - 1) as f64).collect()
    } else {
        vec![0.5]
    };
    let mut grid_values = Vec::with_capacity(grid.len());
    for &p in &grid {
        grid_values.push(solve(p, &mut probes)?);
    }

    if grid.len() > 1 {
        let k = (0..grid.len())
            .min_by(|&a, &b| grid_values[a].total_cmp(&grid_values[b]))
            .expect("grid is nonempty");
        let a = grid[k.saturating_sub(1)];
        let b = grid[(k + 1).min(grid.len() - 1)];
        let mut err = None;
        golden_min(
            |p| match solve(p, &mut probes) {
                Ok(v) => v,
                Err(e) => {
                    err.get_or_insert(e);
                    f64::INFINITY
                }
            },
            a,
            b,
            1e-9,
            80,
        );
        if let Some(e) = err {
            return Err(e);
        }
    }

    let p_probes = probes.len();
    let mut best: Option<LsSolution> = None;
    for s in probes {
        let replace = match &best {
            None => true,
            Some(b) => {
                if tied(s.objective, b.objective) {
                    let (ds, db) = ((s.p_used - p_emp).abs(), (b.p_used - p_emp).abs());
                    ds < db || (ds == db && s.t_hat > b.t_hat)
                } else {
                    s.objective < b.objective
                }
            }
        };
        if replace {
            best = Some(s);
        }
    }
    let mut best = best.expect("at least one probe");
    best.diagnostics.p_probes = p_probes;
    Ok(best)
}
