//! Continuous relaxation of the least-squares program over the four free
//! splits `x = [N(3,1), N(1,2), N(2,3), N(1,4)]`, each in `[0, g_j]`.
//!
//! The relaxed objective is a sum of quadratic-over-linear terms in affine
//! functions of `x`, hence convex. When the singleton errors can all vanish
//! (p equal to the empirical fraction) the minimizers form a segment along
//! [`Relaxed::null_direction`], and the anchor for the integer search is the
//! point of that segment furthest from the box boundary.

use crate::golden::golden_min;

/// d(intervention count of type i) / d(split j).
const DX: [[f64; 4]; 4] = [
    [0.0, 1.0, 0.0, 0.0],
    [0.0, -1.0, 0.0, 0.0],
    [1.0, 0.0, 0.0, 0.0],
    [-1.0, 0.0, 0.0, 0.0],
];
/// d(total of type i) / d(split j).
const DT: [[f64; 4]; 4] = [
    [0.0, 1.0, 0.0, 1.0],
    [0.0, -1.0, 1.0, 0.0],
    [1.0, 0.0, 0.0, -1.0],
    [-1.0, 0.0, -1.0, 0.0],
];

/// Per-type intervention counts and totals of a (possibly fractional) split.
#[inline]
pub(crate) fn arms(g: &[f64; 4], x: &[f64; 4]) -> ([f64; 4], [f64; 4]) {
    let [g1, g2, g3, g4] = *g;
    let [a, b, c, d] = *x;
    (
        [b, g2 - b, a, g1 - a],
        [b + d, g2 - b + c, a + g4 - d, g1 - a + g3 - c],
    )
}

/// Variance-weighted squared randomization error summed over the 15
/// nonempty type subsets; subsets with no mass contribute zero.
#[inline]
pub(crate) fn weighted_error(x: &[f64; 4], t: &[f64; 4], p: f64) -> f64 {
    let var = p * (1.0 - p);
    let mut s = 0.0;
    for &mask in super::SUBSET_MASKS.iter() {
        let (mut xs, mut ts) = (0.0, 0.0);
        for i in 0..4 {
            if mask >> i & 1 == 1 {
                xs += x[i];
                ts += t[i];
            }
        }
        if ts > 0.0 {
            let e = xs - p * ts;
            s += e * e / (var * ts);
        }
    }
    s
}

#[derive(Debug, Clone)]
pub(crate) struct Relaxed {
    pub g: [f64; 4],
    pub p: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Descent {
    pub x: [f64; 4],
    pub value: f64,
    pub iterations: usize,
}

const MAX_DESCENT_ITERS: usize = 500;

impl Relaxed {
    pub fn new(g: [u64; 4], p: f64) -> Self {
        Self { g: g.map(|v| v as f64), p }
    }

    pub fn value(&self, x: &[f64; 4]) -> f64 {
        let (xi, ti) = arms(&self.g, x);
        weighted_error(&xi, &ti, self.p)
    }

    pub fn gradient(&self, x: &[f64; 4]) -> [f64; 4] {
        let p = self.p;
        let var = p * (1.0 - p);
        let (xi, ti) = arms(&self.g, x);
        let mut grad = [0.0; 4];
        for &mask in super::SUBSET_MASKS.iter() {
            let (mut xs, mut ts) = (0.0, 0.0);
            let (mut dx, mut dt) = ([0.0; 4], [0.0; 4]);
            for i in 0..4 {
                if mask >> i & 1 == 1 {
                    xs += xi[i];
                    ts += ti[i];
                    for j in 0..4 {
                        dx[j] += DX[i][j];
                        dt[j] += DT[i][j];
                    }
                }
            }
            if ts <= 0.0 {
                continue;
            }
            let e = xs - p * ts;
            for j in 0..4 {
                let de = dx[j] - p * dt[j];
                grad[j] += 2.0 * e * de / (var * ts) - e * e * dt[j] / (var * ts * ts);
            }
        }
        grad
    }

    pub fn project(&self, x: [f64; 4]) -> [f64; 4] {
        let mut out = x;
        for (v, &hi) in out.iter_mut().zip(&self.g) {
            *v = v.clamp(0.0, hi);
        }
        out
    }

    /// Projected gradient descent with Barzilai–Borwein steps and Armijo
    /// backtracking.
    pub fn descend(&self, start: [f64; 4]) -> Descent {
        let scale = self.g.iter().cloned().fold(1.0, f64::max);
        let mut x = self.project(start);
        let mut f = self.value(&x);
        let mut grad = self.gradient(&x);
        let gnorm = grad.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let mut alpha = if gnorm > 0.0 { 0.1 * scale / gnorm } else { 1.0 };
        let mut iterations = 0;
        while iterations < MAX_DESCENT_ITERS {
            iterations += 1;
            let mut step = alpha;
            let (next, f_next) = loop {
                let trial = self.project([0, 1, 2, 3].map(|j| x[j] - step * grad[j]));
                let decrease: f64 = (0..4).map(|j| grad[j] * (x[j] - trial[j])).sum();
                let f_trial = self.value(&trial);
                if f_trial <= f - 1e-4 * decrease || step < 1e-30 {
                    break (trial, f_trial);
                }
                step *= 0.5;
            };
            let moved = (0..4).map(|j| (next[j] - x[j]).abs()).fold(0.0, f64::max);
            let g_next = self.gradient(&next);
            let s: [f64; 4] = [0, 1, 2, 3].map(|j| next[j] - x[j]);
            let y: [f64; 4] = [0, 1, 2, 3].map(|j| g_next[j] - grad[j]);
            let sy: f64 = (0..4).map(|j| s[j] * y[j]).sum();
            let ss: f64 = (0..4).map(|j| s[j] * s[j]).sum();
            alpha = if sy > 0.0 { ss / sy } else { step * 2.0 };
            let improved = f - f_next;
            x = next;
            f = f_next.min(f);
            grad = g_next;
            if moved <= 1e-9 * scale || (improved >= 0.0 && improved <= 1e-16 * f.max(1e-300) && moved < 1e-6) {
                break;
            }
        }
        Descent { x, value: self.value(&x), iterations }
    }

    /// Direction in split space that leaves every randomization error
    /// unchanged, scaled so its `N(1,2)` component is 1.
    pub fn null_direction(&self) -> [f64; 4] {
        let q = (1.0 - self.p) / self.p;
        [-1.0, 1.0, -q, q]
    }

    /// Interval of `s` keeping `x + s v` inside the box.
    fn line_range(&self, x: &[f64; 4], v: &[f64; 4]) -> (f64, f64) {
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for j in 0..4 {
            if v[j] == 0.0 {
                continue;
            }
            let a = (0.0 - x[j]) / v[j];
            let b = (self.g[j] - x[j]) / v[j];
            lo = lo.max(a.min(b));
            hi = hi.min(a.max(b));
        }
        (lo.min(0.0), hi.max(0.0))
    }

    /// Smallest distance to a box face over the coordinates with room to move.
    pub fn min_slack(&self, x: &[f64; 4]) -> f64 {
        (0..4)
            .filter(|&j| self.g[j] > 0.0)
            .map(|j| x[j].min(self.g[j] - x[j]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Recentres a relaxed minimizer along the null direction. Points on
    /// the line whose objective is within `tolerance` of the line minimum
    /// count as optimal; the returned anchor maximizes the distance to the
    /// box boundary among them.
    pub fn center_on_face(&self, x: [f64; 4], tolerance: f64) -> ([f64; 4], f64) {
        let v = self.null_direction();
        let at = |s: f64| self.project([0, 1, 2, 3].map(|j| x[j] + s * v[j]));
        let phi = |s: f64| self.value(&at(s));
        let (lo, hi) = self.line_range(&x, &v);
        if hi - lo <= 0.0 {
            return (x, self.value(&x));
        }
        let span_tol = 1e-9 * (hi - lo).max(1.0);
        let min = golden_min(phi, lo, hi, span_tol, 200);
        let (s_best, f_best) = if phi(0.0) < min.fx { (0.0, phi(0.0)) } else { (min.x, min.fx) };
        let level = f_best + tolerance;

        let edge = |inside: f64, outside: f64| -> f64 {
            if phi(outside) <= level {
                return outside;
            }
            let (mut a, mut b) = (inside, outside);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if phi(m) <= level {
                    a = m;
                } else {
                    b = m;
                }
                if (b - a).abs() <= span_tol {
                    break;
                }
            }
            a
        };
        let left = edge(s_best, lo);
        let right = edge(s_best, hi);
        let center = golden_min(|s| -self.min_slack(&at(s)), left, right, span_tol, 200);
        let anchor = at(center.x);
        (anchor, self.value(&anchor))
    }
}

/// Element `index` of the base-`base` van der Corput sequence.
pub(crate) fn van_der_corput(mut index: u64, base: u64) -> f64 {
    let mut out = 0.0;
    let mut denom = 1.0;
    while index > 0 {
        denom *= base as f64;
        out += (index % base) as f64 / denom;
        index /= base;
    }
    out
}

/// Relaxation start points: the given baseline, the box centre, the 16
/// corners, then a Halton sequence; truncated to `count` (at least one).
pub(crate) fn start_points(g: &[f64; 4], baseline: [f64; 4], count: usize) -> Vec<[f64; 4]> {
    let mut out = vec![baseline, g.map(|v| v / 2.0)];
    for mask in 0..16u32 {
        out.push([0, 1, 2, 3].map(|j| if mask >> j & 1 == 1 { g[j] } else { 0.0 }));
    }
    let bases = [2, 3, 5, 7];
    let mut k = 1u64;
    while out.len() < count {
        out.push([0, 1, 2, 3].map(|j| g[j] * van_der_corput(k, bases[j])));
        k += 1;
    }
    out.truncate(count.max(1));
    out
}
