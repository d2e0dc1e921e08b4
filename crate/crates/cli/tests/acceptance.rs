//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero if any
//! criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use strata_core::baseline::{first_stage, monotonicity_shares};
use strata_core::bootstrap::{bootstrap_se, EstimatorConfig};
use strata_core::cli_io::read_input;
use strata_core::least_squares::{ls_estimate, ls_estimate_free_p, DEFAULT_RESTARTS};
use strata_core::mle::{mle_exact, mle_heuristic, DEFAULT_RESTARTS as MLE_RESTARTS};
use strata_core::model::{enumerate_distribution, grouped_data_with_total, log_data_probability};
use strata_core::simulator::{simulate_grouped, SimConfig};
use strata_core::{GroupedData, TypeVector};

const PUBLISHED_T: [u64; 4] = [151060, 73401, 96911, 73468];
const PUBLISHED_SHARES: [f64; 4] = [0.38, 0.19, 0.25, 0.19];

fn dataset_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/same_sex.json")
}

fn dataset() -> GroupedData {
    read_input(&dataset_path()).expect("bundled dataset parses")
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(got: f64, want: f64, tol: f64) -> bool {
    (got - want).abs() <= tol
}

// Independent oracles.

/// Observed cell (0-based, order (z,d) = (1,1), (1,0), (0,1), (0,0)) of a
/// participant of type `i` (never, defier, complier, always) under `z`.
fn cell(i: usize, z: bool) -> usize {
    let treated = match i {
        0 => false,
        1 => !z,
        2 => z,
        _ => true,
    };
    match (z, treated) {
        (true, true) => 0,
        (true, false) => 1,
        (false, true) => 2,
        (false, false) => 3,
    }
}

/// Distribution of grouped data by enumerating every assignment vector.
fn assignment_distribution(t: [u64; 4], p: f64) -> BTreeMap<[u64; 4], f64> {
    let types: Vec<usize> = (0..4).flat_map(|i| std::iter::repeat_n(i, t[i] as usize)).collect();
    let n = types.len();
    let mut out = BTreeMap::new();
    for mask in 0u64..(1 << n) {
        let mut g = [0u64; 4];
        let mut prob = 1.0;
        for (k, &i) in types.iter().enumerate() {
            let z = mask >> k & 1 == 1;
            g[cell(i, z)] += 1;
            prob *= if z { p } else { 1.0 - p };
        }
        *out.entry(g).or_insert(0.0) += prob;
    }
    out
}

/// Least-squares objective of a count matrix given by its four free splits.
fn ls_objective(g: [u64; 4], splits: [u64; 4], p: f64) -> f64 {
    let [a, b, c, d] = splits;
    let x = [b, g[1] - b, a, g[0] - a].map(|v| v as f64);
    let t = [b + d, g[1] - b + c, a + g[3] - d, g[0] - a + g[2] - c].map(|v| v as f64);
    let mut s = 0.0;
    for mask in 1..16 {
        let (mut xs, mut ts) = (0.0, 0.0);
        for i in 0..4 {
            if mask >> i & 1 == 1 {
                xs += x[i];
                ts += t[i];
            }
        }
        if ts > 0.0 {
            s += (xs - p * ts).powi(2) / (p * (1.0 - p) * ts);
        }
    }
    s
}

fn ls_exhaustive_min(g: [u64; 4], p: f64) -> f64 {
    let mut best = f64::INFINITY;
    for a in 0..=g[0] {
        for b in 0..=g[1] {
            for c in 0..=g[2] {
                for d in 0..=g[3] {
                    best = best.min(ls_objective(g, [a, b, c, d], p));
                }
            }
        }
    }
    best
}

/// Smallest objective among count matrices whose row sums are `t`.
fn ls_min_on_type_vector(g: [u64; 4], t: [u64; 4], p: f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    for b in 0..=g[1] {
        let Some(d) = t[0].checked_sub(b) else { continue };
        let Some(c) = (t[1] + b).checked_sub(g[1]) else { continue };
        let Some(a) = (t[2] + d).checked_sub(g[3]) else { continue };
        if a > g[0] || c > g[2] || d > g[3] || g[0] - a + g[2] - c != t[3] {
            continue;
        }
        let s = ls_objective(g, [a, b, c, d], p);
        best = Some(best.map_or(s, |v: f64| v.min(s)));
    }
    best
}

fn same_value(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-12)
}

// Criteria.

fn criterion_1() -> Outcome {
    let g = dataset();
    let fs = first_stage(&g).unwrap();
    let s = monotonicity_shares(&g).unwrap();
    let ok = within(fs, 0.0595, 0.0005)
        && within(s.never_share, 0.568, 0.001)
        && within(s.always_share, 0.372, 0.001)
        && within(s.complier_share, 0.060, 0.001)
        && within(s.p_empirical, 0.5054, 0.0001);
    check(
        ok,
        format!(
            "first stage {fs:.5}, never {:.4}, always {:.4}, complier {:.4}, p {:.5}",
            s.never_share, s.always_share, s.complier_share, s.p_empirical
        ),
    )
}

fn criterion_2() -> Outcome {
    let g = dataset();
    let p = g.empirical_p().unwrap();
    let s = ls_estimate(&g, p, 0, DEFAULT_RESTARTS).unwrap();
    let shares = s.t_hat.shares();
    let shares_ok = shares.iter().zip(PUBLISHED_SHARES).all(|(&a, b)| within(a, b, 0.005));
    let reference = ls_min_on_type_vector(g.counts(), PUBLISHED_T, p).expect("published vector is feasible");
    let own = ls_objective(g.counts(), s.n_hat.splits(), p);
    let objective_ok = own <= reference && same_value(own, s.objective);
    let exact = s.t_hat.counts() == PUBLISHED_T;
    check(
        shares_ok && objective_ok,
        format!(
            "t_hat {:?}, shares {:.4?}, objective {own:.6e} vs published-vector minimum {reference:.6e}, exact count match {exact}",
            s.t_hat.counts(),
            shares
        ),
    )
}

fn criterion_3() -> Outcome {
    let g = dataset();
    let s = ls_estimate_free_p(&g, 0, DEFAULT_RESTARTS).unwrap();
    check(within(s.p_used, 0.5054, 0.005), format!("p_used {:.6} after {} probes", s.p_used, s.diagnostics.p_probes))
}

fn criterion_4() -> Outcome {
    let g = dataset();
    let s = ls_estimate(&g, g.empirical_p().unwrap(), 0, DEFAULT_RESTARTS).unwrap();
    let t = s.t_hat.counts();
    let diff = (t[2] as f64 - t[1] as f64) / g.total() as f64;
    let fs = first_stage(&g).unwrap();
    check(within(diff, fs, 0.005), format!("(t3 - t2)/n = {diff:.5}, first stage {fs:.5}"))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_norm = 0.0f64;
    let mut worst_point = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(0..=12u64);
        let mut t = [0u64; 4];
        for _ in 0..n {
            t[rng.random_range(0..4)] += 1;
        }
        let tv = TypeVector::new(t);
        for p in [0.2, 0.5054, 0.8] {
            let total: f64 = grouped_data_with_total(n)
                .map(|g| log_data_probability(&tv, &g, p).unwrap().prob())
                .sum();
            worst_norm = worst_norm.max((total - 1.0).abs());
            let enumerated = enumerate_distribution(&tv, p).unwrap();
            let oracle = assignment_distribution(t, p);
            for g in grouped_data_with_total(n) {
                let lp = log_data_probability(&tv, &g, p).unwrap().prob();
                let e = enumerated.get(&g).copied().unwrap_or(0.0);
                let o = oracle.get(&g.counts()).copied().unwrap_or(0.0);
                worst_point = worst_point.max((lp - e).abs()).max((lp - o).abs());
            }
        }
    }
    check(
        worst_norm <= 1e-10 && worst_point <= 1e-10,
        format!("max |sum - 1| = {worst_norm:.2e}, max pointwise gap = {worst_point:.2e}"),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mle_misses = 0;
    for k in 0..100u64 {
        let n = rng.random_range(1..=60u64);
        let mut c = [0u64; 4];
        for _ in 0..n {
            c[rng.random_range(0..4)] += 1;
        }
        let g = GroupedData::new(c);
        let p = rng.random_range(0.1..0.9);
        let exact = mle_exact(&g, p).unwrap();
        let heur = mle_heuristic(&g, p, k, MLE_RESTARTS).unwrap();
        if !same_value(exact.log_likelihood, heur.log_likelihood) {
            mle_misses += 1;
        }
    }
    let mut ls_misses = 0;
    for k in 0..100u64 {
        let g = GroupedData::new([0; 4].map(|_: u64| rng.random_range(0..=12u64)));
        if g.total() == 0 {
            continue;
        }
        let p = rng.random_range(0.1..0.9);
        let s = ls_estimate(&g, p, k, DEFAULT_RESTARTS).unwrap();
        if !same_value(s.objective, ls_exhaustive_min(g.counts(), p)) {
            ls_misses += 1;
        }
    }
    check(
        mle_misses == 0 && ls_misses == 0,
        format!("mle_heuristic missed {mle_misses}/100, ls_estimate missed {ls_misses}/100"),
    )
}

/// Pearson statistic with cells of expected count below 5 pooled.
fn chi_square_p_value(observed: &BTreeMap<GroupedData, u64>, expected: &BTreeMap<GroupedData, f64>, draws: f64) -> f64 {
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut pool_o, mut pool_e) = (0.0, 0.0);
    for (g, &prob) in expected {
        let o = observed.get(g).copied().unwrap_or(0) as f64;
        let e = prob * draws;
        if e < 5.0 {
            pool_o += o;
            pool_e += e;
        } else {
            bins.push((o, e));
        }
    }
    if pool_e > 0.0 {
        bins.push((pool_o, pool_e));
    }
    if bins.len() < 2 {
        return 1.0;
    }
    let stat: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dist = ChiSquared::new((bins.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

fn criterion_7() -> Outcome {
    let fixtures: [([u64; 4], f64); 5] = [
        ([2, 2, 2, 2], 0.5),
        ([1, 3, 0, 4], 0.3),
        ([0, 0, 5, 3], 0.7),
        ([4, 1, 1, 1], 0.5054),
        ([3, 3, 1, 0], 0.2),
    ];
    let draws = 100_000u64;
    let mut p_values = Vec::new();
    let mut outside_support = 0;
    for (k, (t, p)) in fixtures.into_iter().enumerate() {
        let tv = TypeVector::new(t);
        let expected = enumerate_distribution(&tv, p).unwrap();
        let cfg = SimConfig { t: tv, p, seed: 70 + k as u64, replications: draws };
        let mut observed: BTreeMap<GroupedData, u64> = BTreeMap::new();
        for g in simulate_grouped(&cfg).unwrap() {
            if !expected.contains_key(&g) {
                outside_support += 1;
            }
            *observed.entry(g).or_insert(0) += 1;
        }
        p_values.push(chi_square_p_value(&observed, &expected, draws as f64));
    }
    let ok = outside_support == 0 && p_values.iter().all(|&v| v >= 0.001);
    check(ok, format!("p-values {p_values:.4?}, draws outside support {outside_support}"))
}

fn criterion_8() -> Outcome {
    let g = dataset();
    let cfg = EstimatorConfig::LsFreeP { restarts: DEFAULT_RESTARTS };
    let start = Instant::now();
    let a = bootstrap_se(&g, &cfg, 1000, 2024).unwrap();
    let first = start.elapsed();
    let b = bootstrap_se(&g, &cfg, 1000, 2024).unwrap();
    let ja = serde_json::to_string(&a).unwrap();
    let jb = serde_json::to_string(&b).unwrap();
    let ok = a.replications == 1000 && a.failures == 0 && a.se_t.iter().all(|&s| s.is_finite() && s > 0.0) && ja == jb;
    check(
        ok,
        format!(
            "{} replications, {} excluded, se_t {:.1?}, se_p {:.2e}, repeat identical {}, {:.0?} per run",
            a.replications,
            a.failures,
            a.se_t,
            a.se_p,
            ja == jb,
            first
        ),
    )
}

fn run_cli(args: &[&str]) -> (bool, Vec<u8>) {
    let out = Command::new(env!("CARGO_BIN_EXE_strata")).args(args).output().expect("binary runs");
    (out.status.success(), out.stdout)
}

fn criterion_9() -> Outcome {
    let dir = std::env::temp_dir().join(format!("strata-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let toy = dir.join("toy.csv");
    std::fs::write(&toy, "z,d,count\n1,1,9\n1,0,6\n0,1,4\n0,0,11\n").unwrap();
    let data = dataset_path();
    let data = data.to_str().unwrap();
    let toy = toy.to_str().unwrap();
    let out_a = dir.join("a.json");
    let out_b = dir.join("b.json");

    let runs: Vec<Vec<&str>> = vec![
        vec!["estimate", "--input", data, "--estimator", "ls", "--p", "empirical", "--bootstrap", "20", "--seed", "3"],
        vec!["estimate", "--input", data, "--estimator", "ls", "--p", "estimate", "--format", "text"],
        vec!["estimate", "--input", data, "--estimator", "mle", "--p", "empirical", "--restarts", "4"],
        vec!["estimate", "--input", toy, "--estimator", "both", "--p", "fixed=0.5", "--bootstrap", "30", "--seed", "9"],
        vec!["estimate", "--input", toy, "--estimator", "mle", "--p", "estimate", "--bootstrap", "10", "--seed", "1"],
        vec!["simulate", "--t", "40,10,30,20", "--p", "0.5", "--reps", "50", "--seed", "7"],
    ];
    let mut mismatches = Vec::new();
    for (k, args) in runs.iter().enumerate() {
        let (ok1, a) = run_cli(args);
        let (ok2, b) = run_cli(args);
        if !(ok1 && ok2 && a == b && !a.is_empty()) {
            mismatches.push(k);
        }
    }
    let file_args = |out: &Path| {
        vec![
            "estimate".to_string(),
            "--input".into(),
            toy.into(),
            "--estimator".into(),
            "both".into(),
            "--seed".into(),
            "5".into(),
            "--output".into(),
            out.to_str().unwrap().into(),
        ]
    };
    let (ok_a, _) = run_cli(&file_args(&out_a).iter().map(String::as_str).collect::<Vec<_>>());
    let (ok_b, _) = run_cli(&file_args(&out_b).iter().map(String::as_str).collect::<Vec<_>>());
    let files_equal = ok_a && ok_b && std::fs::read(&out_a).unwrap() == std::fs::read(&out_b).unwrap();
    let (bad_exit, _) = run_cli(&["estimate", "--input", "/nonexistent/input.json"]);
    let _ = std::fs::remove_dir_all(&dir);
    check(
        mismatches.is_empty() && files_equal && !bad_exit,
        format!(
            "{} of {} command lines reproduced byte for byte, --output files identical {files_equal}, missing input exits nonzero {}",
            runs.len() - mismatches.len(),
            runs.len(),
            !bad_exit
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("baseline replication", criterion_1),
        ("least-squares replication", criterion_2),
        ("free-p consistency", criterion_3),
        ("first-stage identity", criterion_4),
        ("likelihood normalization", criterion_5),
        ("estimator oracle equivalence", criterion_6),
        ("simulator fidelity", criterion_7),
        ("bootstrap", criterion_8),
        ("CLI determinism", criterion_9),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let label = format!("criterion {}", k + 1);
        if !filter.is_empty() && !filter.iter().any(|f| label.ends_with(f.as_str()) || name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = f();
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        println!("{label} [{verdict}] {name}: {} ({:.1?})", outcome.detail, start.elapsed());
        if !outcome.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
