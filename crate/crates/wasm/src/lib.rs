//! Browser bindings for the demo page in `www/`. Every export returns a JSON
//! string so the page needs no generated TypeScript types.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use strata_core::cli_io::{run_pipeline, EstimatorSelection, InputSource, PMode, RunConfig};
use strata_core::model::enumerate_distribution;
use strata_core::simulator::{simulate_grouped, SimConfig};
use strata_core::{GroupedData, TypeVector};

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn counts(a: u32, b: u32, c: u32, d: u32) -> [u64; 4] {
    [a, b, c, d].map(u64::from)
}

/// Baseline plus the selected estimators for grouped data `g`.
/// `estimator` is `ls`, `mle` or `both`; `p_mode` is `fixed=<v>`,
/// `empirical` or `estimate`.
#[wasm_bindgen]
pub fn estimate(g1: u32, g2: u32, g3: u32, g4: u32, estimator: &str, p_mode: &str, seed: u32) -> Result<String, JsError> {
    let cfg = RunConfig {
        estimator: estimator.parse::<EstimatorSelection>().map_err(js_err)?,
        p_mode: p_mode.parse::<PMode>().map_err(js_err)?,
        seed: u64::from(seed),
        ..RunConfig::new(InputSource::Inline(GroupedData::new(counts(g1, g2, g3, g4))))
    };
    let report = run_pipeline(&cfg).map_err(js_err)?;
    serde_json::to_string(&report).map_err(js_err)
}

#[derive(Serialize)]
struct Mass {
    g: [u64; 4],
    prob: f64,
}

/// Exact distribution of grouped data for type counts `t` (at most 20
/// participants), most likely outcomes first.
#[wasm_bindgen]
pub fn data_distribution(t1: u32, t2: u32, t3: u32, t4: u32, p: f64) -> Result<String, JsError> {
    let t = TypeVector::new(counts(t1, t2, t3, t4));
    let dist = enumerate_distribution(&t, p).map_err(js_err)?;
    let mut masses: Vec<Mass> = dist.into_iter().map(|(g, prob)| Mass { g: g.counts(), prob }).collect();
    masses.sort_by(|a, b| b.prob.total_cmp(&a.prob).then(a.g.cmp(&b.g)));
    serde_json::to_string(&masses).map_err(js_err)
}

/// Simulated grouped datasets as a JSON array of `[g1, g2, g3, g4]`.
#[wasm_bindgen]
pub fn simulate(t1: u32, t2: u32, t3: u32, t4: u32, p: f64, reps: u32, seed: u32) -> Result<String, JsError> {
    let cfg = SimConfig {
        t: TypeVector::new(counts(t1, t2, t3, t4)),
        p,
        seed: u64::from(seed),
        replications: u64::from(reps),
    };
    let draws: Vec<[u64; 4]> = simulate_grouped(&cfg).map_err(js_err)?.iter().map(|g| g.counts()).collect();
    serde_json::to_string(&draws).map_err(js_err)
}
