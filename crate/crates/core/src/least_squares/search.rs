//! Integer local search over the four splits inside a trust region around
//! the relaxed anchor.

use rand::Rng;

use super::relax::{arms, weighted_error};
use crate::mle::step_sizes;
use crate::model::{CountMatrix, GroupedData, TypeVector};
use crate::rng::replication_rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Candidate {
    pub splits: [u64; 4],
    pub t: TypeVector,
    pub objective: f64,
}

/// Objective values this close (relative) are ties.
pub(crate) fn tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()) + 1e-24
}

/// Total order used to pick a winner: lower objective, then on ties the
/// lexicographically larger type vector.
pub(crate) fn better(a: &Candidate, b: &Candidate) -> bool {
    if tied(a.objective, b.objective) {
        a.t > b.t
    } else {
        a.objective < b.objective
    }
}

pub(crate) struct IntegerSearch {
    g: [u64; 4],
    gf: [f64; 4],
    p: f64,
    lo: [u64; 4],
    hi: [u64; 4],
    pub evaluations: u64,
    pub moves: u64,
}

impl IntegerSearch {
    pub fn new(g: &GroupedData, p: f64, anchor: [f64; 4], radius: u64) -> Self {
        let gc = g.counts();
        let r = radius as f64;
        let lo = [0, 1, 2, 3].map(|j| (anchor[j] - r).floor().max(0.0) as u64);
        let hi = [0, 1, 2, 3].map(|j| ((anchor[j] + r).ceil().max(0.0) as u64).min(gc[j]));
        Self { g: gc, gf: gc.map(|v| v as f64), p, lo, hi, evaluations: 0, moves: 0 }
    }

    fn inside(&self, s: &[i64; 4]) -> bool {
        (0..4).all(|j| s[j] >= self.lo[j] as i64 && s[j] <= self.hi[j] as i64)
    }

    pub fn evaluate(&mut self, splits: [u64; 4]) -> Candidate {
        self.evaluations += 1;
        let x = splits.map(|v| v as f64);
        let (xi, ti) = arms(&self.gf, &x);
        let [a, b, c, d] = splits;
        let [g1, g2, g3, g4] = self.g;
        let t = TypeVector::new([b + d, g2 - b + c, a + g4 - d, g1 - a + g3 - c]);
        Candidate { splits, t, objective: weighted_error(&xi, &ti, self.p) }
    }

    /// Integer points near `anchor + k v` for `k = -radius..=radius`: every
    /// floor/ceil rounding of each line point. Returns the `keep` best.
    pub fn scan_line(&mut self, anchor: [f64; 4], v: [f64; 4], radius: u64, keep: usize) -> Vec<Candidate> {
        let mut pool: Vec<Candidate> = Vec::new();
        let r = radius as i64;
        for k in -r..=r {
            let point = [0, 1, 2, 3].map(|j| anchor[j] + k as f64 * v[j]);
            if (0..4).any(|j| point[j] < -1.0 || point[j] > self.gf[j] + 1.0) {
                continue;
            }
            for mask in 0..16u32 {
                let s = [0, 1, 2, 3].map(|j| {
                    if mask >> j & 1 == 1 {
                        point[j].ceil() as i64
                    } else {
                        point[j].floor() as i64
                    }
                });
                if !self.inside(&s) {
                    continue;
                }
                let cand = self.evaluate(s.map(|v| v as u64));
                insert_best(&mut pool, cand, keep);
            }
        }
        pool
    }

    pub fn random_point<R: Rng>(&self, rng: &mut R) -> [u64; 4] {
        [0, 1, 2, 3].map(|j| rng.random_range(self.lo[j]..=self.hi[j]))
    }

    /// Number of integer points in the trust region.
    pub fn box_size(&self) -> u128 {
        (0..4).map(|j| (self.hi[j] - self.lo[j] + 1) as u128).product()
    }

    /// Evaluates every point of the trust region; returns the best and all
    /// points tied with it.
    pub fn exhaustive(&mut self) -> Vec<Candidate> {
        let mut best: Vec<Candidate> = Vec::new();
        for a in self.lo[0]..=self.hi[0] {
            for b in self.lo[1]..=self.hi[1] {
                for c in self.lo[2]..=self.hi[2] {
                    for d in self.lo[3]..=self.hi[3] {
                        let cand = self.evaluate([a, b, c, d]);
                        match best.first() {
                            Some(top) if tied(cand.objective, top.objective) => best.push(cand),
                            Some(top) if cand.objective > top.objective => {}
                            _ => best = vec![cand],
                        }
                    }
                }
            }
        }
        best.sort_by_key(|c| std::cmp::Reverse(c.t));
        best
    }

    /// Steepest descent with single-coordinate moves of size 1, 10, 100,
    /// ..., unit moves on pairs of coordinates, and multiples of the null
    /// direction. Moves to tied points with a larger type vector are also
    /// taken, so plateaus are left at their lexicographically largest end.
    pub fn polish(&mut self, start: [u64; 4], v: [f64; 4]) -> Candidate {
        let width = (0..4).map(|j| self.hi[j] - self.lo[j]).max().unwrap_or(0);
        let steps = step_sizes(width);
        let mut moves: Vec<[i64; 4]> = Vec::new();
        for j in 0..4 {
            for &d in &steps {
                for sign in [1i64, -1] {
                    let mut m = [0i64; 4];
                    m[j] = sign * d as i64;
                    moves.push(m);
                }
            }
        }
        for j in 0..4 {
            for k in j + 1..4 {
                for (sj, sk) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
                    let mut m = [0i64; 4];
                    m[j] = sj;
                    m[k] = sk;
                    moves.push(m);
                }
            }
        }
        for &d in &steps {
            for sign in [1.0, -1.0] {
                let m = v.map(|c| (sign * d as f64 * c).round() as i64);
                if m != [0; 4] && !moves.contains(&m) {
                    moves.push(m);
                }
            }
        }

        let mut current = self.evaluate(start);
        loop {
            let mut best: Option<Candidate> = None;
            for m in &moves {
                let s = [0, 1, 2, 3].map(|j| current.splits[j] as i64 + m[j]);
                if !self.inside(&s) {
                    continue;
                }
                let cand = self.evaluate(s.map(|v| v as u64));
                // `tied` is not transitive, so tie moves must not raise the
                // objective or the walk can cycle.
                let accept = better(&cand, &current) && cand.objective <= current.objective;
                if accept && best.as_ref().is_none_or(|b| better(&cand, b)) {
                    best = Some(cand);
                }
            }
            match best {
                Some(b) => {
                    current = b;
                    self.moves += 1;
                }
                None => return current,
            }
        }
    }

    pub fn seeded_starts(&self, seed: u64, count: usize) -> Vec<[u64; 4]> {
        (0..count)
            .map(|k| self.random_point(&mut replication_rng(seed, k as u64)))
            .collect()
    }

    pub fn matrix(&self, g: &GroupedData, c: &Candidate) -> CountMatrix {
        CountMatrix::from_splits(g, c.splits).expect("search stays inside the cell counts")
    }
}

/// Keeps `pool` sorted best-first with at most `keep` entries and distinct
/// splits.
pub(crate) fn insert_best(pool: &mut Vec<Candidate>, cand: Candidate, keep: usize) {
    if pool.iter().any(|c| c.splits == cand.splits) {
        return;
    }
    let pos = pool.iter().position(|c| better(&cand, c)).unwrap_or(pool.len());
    if pos < keep {
        pool.insert(pos, cand);
        pool.truncate(keep);
    }
}
