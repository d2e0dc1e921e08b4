//! Maximum-likelihood estimation of the type vector.
//!
//! For small samples every type vector on the simplex `Σt = n` is scored.
//! Larger samples use multi-start compass search over transfers between
//! types. Unknown `p` is profiled over a grid.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baseline::{largest_remainder, monotonicity_matrix, monotonicity_start};
use crate::error::{check_open_unit, Error, Result};
use crate::golden::golden_min;
use crate::model::{log_data_probability, CountMatrix, GroupedData, LikelihoodKernel, TypeVector};
use crate::rng::replication_rng;

pub const DEFAULT_EXACT_CAP: u64 = 200;
pub const DEFAULT_RESTARTS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MleMethod {
    ExactEnumeration,
    HeuristicSearch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleResult {
    pub t_hat: TypeVector,
    pub p_used: f64,
    pub log_likelihood: f64,
    pub method: MleMethod,
    pub converged: bool,
    /// Every type vector sharing the maximum (exact method only), in
    /// lexicographic order.
    pub ties: Vec<TypeVector>,
    pub evaluations: u64,
}

/// Log-likelihoods closer than this (relative) are treated as equal.
const TIE_RTOL: f64 = 1e-12;

fn tied(a: f64, b: f64) -> bool {
    if !(a.is_finite() && b.is_finite()) {
        return a == b;
    }
    (a - b).abs() <= TIE_RTOL * a.abs().max(b.abs()).max(1.0)
}

/// True when `(ll, t)` should replace `(best_ll, best_t)`: strictly higher
/// likelihood, or a tie won by the lexicographically larger type vector.
fn better(ll: f64, t: &TypeVector, best_ll: f64, best_t: &TypeVector) -> bool {
    if tied(ll, best_ll) {
        t > best_t
    } else {
        ll > best_ll
    }
}

fn check_data(g: &GroupedData, p: f64) -> Result<()> {
    check_open_unit(p)?;
    g.require_nonempty()
}

pub fn mle_exact(g: &GroupedData, p: f64) -> Result<MleResult> {
    mle_exact_capped(g, p, DEFAULT_EXACT_CAP)
}

/// Scores every type vector with `Σt = n`. Among maximizers the
/// lexicographically largest is returned and all are listed in `ties`.
pub fn mle_exact_capped(g: &GroupedData, p: f64, cap: u64) -> Result<MleResult> {
    check_data(g, p)?;
    let n = g.total();
    if n > cap {
        return Err(Error::TooLarge { what: "exact likelihood enumeration", n, cap });
    }
    let kernel = LikelihoodKernel::with_table(p, n)?;
    let mut best = f64::NEG_INFINITY;
    let mut ties: Vec<TypeVector> = Vec::new();
    let mut evaluations = 0u64;
    for t in crate::model::type_vectors_with_total(n) {
        let lp = kernel.log_prob(&t, g);
        evaluations += 1;
        if lp.is_zero() {
            continue;
        }
        let ll = lp.ln();
        if ties.is_empty() || (!tied(ll, best) && ll > best) {
            best = ll;
            ties.clear();
            ties.push(t);
        } else if tied(ll, best) {
            ties.push(t);
        }
    }
    // A consistent count matrix always exists, so some t has positive
    // probability.
    let t_hat = *ties.iter().max().expect("nonempty data has a feasible type vector");
    Ok(MleResult {
        t_hat,
        p_used: p,
        log_likelihood: log_data_probability(&t_hat, g, p)?.ln(),
        method: MleMethod::ExactEnumeration,
        converged: true,
        ties,
        evaluations,
    })
}

/// Transfer sizes 1, 10, 100, ... not exceeding `n`.
pub(crate) fn step_sizes(n: u64) -> Vec<u64> {
    std::iter::successors(Some(1u64), |d| d.checked_mul(10))
        .take_while(|&d| d <= n.max(1))
        .collect()
}

/// Uniformly random count matrix consistent with `g`; its row sums are a
/// type vector with positive likelihood.
fn random_feasible_start<R: Rng>(g: &GroupedData, rng: &mut R) -> TypeVector {
    let splits = g.counts().map(|cap| rng.random_range(0..=cap));
    CountMatrix::from_splits(g, splits)
        .expect("splits drawn within cell counts")
        .row_sums()
}

struct Climb {
    t: TypeVector,
    ll: f64,
    evaluations: u64,
    converged: bool,
}

const MAX_CLIMB_STEPS: usize = 1_000_000;

/// Directions of the compass search that only touch types in `support`
/// (bit `i` for type `i + 1`): one type gains what another loses, or two
/// disjoint transfers of the same size happen at once.
fn directions(support: u8) -> Vec<[i64; 4]> {
    let mut dirs = Vec::with_capacity(18);
    for from in 0..4 {
        for to in 0..4 {
            if from != to {
                let mut d = [0i64; 4];
                d[from] = -1;
                d[to] = 1;
                dirs.push(d);
            }
        }
    }
    for d in [[1, -1, -1, 1], [1, -1, 1, -1], [1, 1, -1, -1]] {
        dirs.push(d);
        dirs.push(d.map(|v| -v));
    }
    dirs.retain(|d| (0..4).all(|i| d[i] == 0 || support >> i & 1 == 1));
    dirs
}

const ALL_TYPES: u8 = 0b1111;

/// Best strictly improving move `t + size * dir` over the given sizes, plus
/// (with `to_boundary`) the longest feasible move in each direction. Ties
/// between candidates go to the larger vector.
#[allow(clippy::too_many_arguments)]
fn best_move(
    kernel: &LikelihoodKernel,
    g: &GroupedData,
    t: TypeVector,
    ll: f64,
    dirs: &[[i64; 4]],
    sizes: &[u64],
    to_boundary: bool,
    evaluations: &mut u64,
) -> Option<(f64, TypeVector)> {
    let mut best: Option<(f64, TypeVector)> = None;
    let counts = t.counts();
    for &dir in dirs {
        let longest = (0..4).filter(|&i| dir[i] < 0).map(|i| counts[i]).min().unwrap_or(0);
        let mut sizes = sizes.to_vec();
        if to_boundary && longest > 0 && !sizes.contains(&longest) {
            sizes.push(longest);
            sizes.sort_unstable();
        }
        for &d in &sizes {
            let c = [0, 1, 2, 3].map(|i| counts[i] as i64 + dir[i] * d as i64);
            if c.iter().any(|&v| v < 0) {
                break;
            }
            let cand = TypeVector::new(c.map(|v| v as u64));
            let cll = kernel.log_prob(&cand, g).ln();
            *evaluations += 1;
            let beats = match &best {
                None => true,
                Some((bll, bt)) => cll > *bll || (cll == *bll && cand > *bt),
            };
            if cll > ll && beats {
                best = Some((cll, cand));
            }
        }
    }
    best
}

/// Compass search over type vectors with the same total, moving only
/// counts among the types in `support`. The step size doubles after a
/// successful move and halves after a failed one. When unit steps no longer
/// help, every size in `steps` and every move to the boundary of the simplex
/// is tried before declaring convergence.
fn hill_climb(kernel: &LikelihoodKernel, g: &GroupedData, start: TypeVector, steps: &[u64], support: u8) -> Climb {
    let dirs = directions(support);
    let n = start.total().max(1);
    let mut t = start;
    let mut ll = kernel.log_prob(&t, g).ln();
    let mut evaluations = 1u64;
    let mut delta = (n / 4).max(1);
    for _ in 0..MAX_CLIMB_STEPS {
        if let Some((cll, cand)) = best_move(kernel, g, t, ll, &dirs, &[delta], false, &mut evaluations) {
            (ll, t) = (cll, cand);
            delta = (delta * 2).min(n);
        } else if delta > 1 {
            delta /= 2;
        } else if let Some((cll, cand)) = best_move(kernel, g, t, ll, &dirs, steps, true, &mut evaluations) {
            (ll, t) = (cll, cand);
        } else {
            return Climb { t, ll, evaluations, converged: true };
        }
    }
    Climb { t, ll, evaluations, converged: false }
}

#[derive(Debug, Clone, Copy)]
enum Start {
    Point(TypeVector),
    /// Centre of the face spanned by the types in the mask; the climb first
    /// stays on that face, then continues on the whole simplex.
    Face(u8),
}

fn climb_from(kernel: &LikelihoodKernel, g: &GroupedData, start: Start, steps: &[u64]) -> Climb {
    match start {
        Start::Point(t) => hill_climb(kernel, g, t, steps, ALL_TYPES),
        Start::Face(mask) => {
            let shares = [0, 1, 2, 3].map(|i| f64::from(mask >> i & 1));
            let centre = TypeVector::new(largest_remainder(shares, g.total()));
            let on_face = hill_climb(kernel, g, centre, steps, mask);
            let free = hill_climb(kernel, g, on_face.t, steps, ALL_TYPES);
            Climb { evaluations: on_face.evaluations + free.evaluations, converged: on_face.converged && free.converged, ..free }
        }
    }
}

/// Multi-start hill climbing on the simplex. Starts are the monotonicity
/// baseline, the centre of every face of the simplex, and `restarts` random
/// consistent count matrices drawn from `seed`. Deterministic given its
/// arguments.
pub fn mle_heuristic(g: &GroupedData, p: f64, seed: u64, restarts: usize) -> Result<MleResult> {
    check_data(g, p)?;
    if restarts == 0 {
        return Err(Error::InvalidArgument("restarts must be at least 1".into()));
    }
    let n = g.total();
    let kernel = LikelihoodKernel::with_table(p, n)?;
    let steps = step_sizes(n);

    let mut starts = Vec::with_capacity(restarts + 16);
    if g.intervention_total() > 0 && g.control_total() > 0 {
        let t0 = monotonicity_start(g)?;
        if kernel.log_prob(&t0, g).is_zero() {
            starts.push(Start::Point(monotonicity_matrix(g)?.row_sums()));
        } else {
            starts.push(Start::Point(t0));
        }
    }
    starts.extend((1..=ALL_TYPES).map(Start::Face));
    for r in 0..restarts {
        starts.push(Start::Point(random_feasible_start(g, &mut replication_rng(seed, r as u64))));
    }

    let climbs = run_climbs(&kernel, g, &starts, &steps);
    let mut evaluations = 0;
    let mut converged = true;
    let mut best: Option<(f64, TypeVector)> = None;
    for c in climbs {
        evaluations += c.evaluations;
        converged &= c.converged;
        if best.as_ref().is_none_or(|(bll, bt)| better(c.ll, &c.t, *bll, bt)) {
            best = Some((c.ll, c.t));
        }
    }
    let (_, t_hat) = best.expect("at least one start");
    Ok(MleResult {
        t_hat,
        p_used: p,
        log_likelihood: log_data_probability(&t_hat, g, p)?.ln(),
        method: MleMethod::HeuristicSearch,
        converged,
        ties: Vec::new(),
        evaluations,
    })
}

#[cfg(feature = "parallel")]
fn run_climbs(kernel: &LikelihoodKernel, g: &GroupedData, starts: &[Start], steps: &[u64]) -> Vec<Climb> {
    use rayon::prelude::*;
    starts.par_iter().map(|&s| climb_from(kernel, g, s, steps)).collect()
}

#[cfg(not(feature = "parallel"))]
fn run_climbs(kernel: &LikelihoodKernel, g: &GroupedData, starts: &[Start], steps: &[u64]) -> Vec<Climb> {
    starts.iter().map(|&s| climb_from(kernel, g, s, steps)).collect()
}

/// Profile-likelihood settings for unknown `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileOptions {
    pub grid: Vec<f64>,
    pub seed: u64,
    pub restarts: usize,
    pub exact_cap: u64,
    /// After the grid, refine `p` for the best type vector by golden-section
    /// search within one grid spacing, then re-solve for `t` there.
    pub refine: bool,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self {
            grid: default_p_grid(),
            seed: 0,
            restarts: DEFAULT_RESTARTS,
            exact_cap: DEFAULT_EXACT_CAP,
            refine: true,
        }
    }
}

/// 0.01, 0.02, ..., 0.99.
pub fn default_p_grid() -> Vec<f64> {
    (1..=99).map(|k| k as f64 / 100.0).collect()
}

fn solve_at(g: &GroupedData, p: f64, opts: &ProfileOptions) -> Result<MleResult> {
    if g.total() <= opts.exact_cap {
        mle_exact_capped(g, p, opts.exact_cap)
    } else {
        mle_heuristic(g, p, opts.seed, opts.restarts)
    }
}

/// Joint maximization over `(t, p)` with `p` restricted to `grid`. Ties go
/// to the smallest `p`, then the lexicographically largest `t`.
pub fn mle_profile_p(g: &GroupedData, grid: &[f64], seed: u64) -> Result<MleResult> {
    let opts = ProfileOptions { grid: grid.to_vec(), seed, refine: false, ..Default::default() };
    mle_profile_p_with(g, &opts)
}

pub fn mle_profile_p_with(g: &GroupedData, opts: &ProfileOptions) -> Result<MleResult> {
    if opts.grid.is_empty() {
        return Err(Error::InvalidArgument("p grid is empty".into()));
    }
    for &p in &opts.grid {
        check_open_unit(p)?;
    }
    g.require_nonempty()?;

    let mut grid = opts.grid.clone();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let mut best: Option<MleResult> = None;
    let mut evaluations = 0;
    for &p in &grid {
        let r = solve_at(g, p, opts)?;
        evaluations += r.evaluations;
        // Grid ascends, so a tie keeps the smaller p unless t wins the tie.
        let replace = match &best {
            None => true,
            Some(b) => !tied(r.log_likelihood, b.log_likelihood) && r.log_likelihood > b.log_likelihood,
        };
        if replace {
            best = Some(r);
        }
    }
    let mut best = best.expect("grid is nonempty");

    if opts.refine && grid.len() > 1 {
        let spacing = grid.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let lo = (best.p_used - spacing).max(spacing.min(best.p_used) * 1e-3);
        let hi = (best.p_used + spacing).min(1.0 - (1.0 - best.p_used).min(spacing) * 1e-3);
        let t = best.t_hat;
        let r = golden_min(
            |p| -log_data_probability(&t, g, p).map_or(f64::INFINITY, |lp| lp.ln()),
            lo,
            hi,
            1e-9,
            200,
        );
        let refined = solve_at(g, r.x, opts)?;
        evaluations += refined.evaluations;
        if !tied(refined.log_likelihood, best.log_likelihood) && refined.log_likelihood > best.log_likelihood {
            best = refined;
        }
    }
    best.evaluations = evaluations;
    Ok(best)
}
