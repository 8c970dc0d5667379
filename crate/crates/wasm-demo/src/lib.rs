//! Browser bindings for three interactive experiments: the limiting tail law
//! of decomposition condition numbers, a small Monte Carlo reproduction of
//! that law, and the adversarial perturbation sweep showing the pencil
//! pipeline's accuracy loss next to its refined counterpart.
//!
//! Every export takes plain numbers and returns a JSON string, so the page
//! stays a single static HTML file with no framework. All functions are
//! deterministic in their seed. Build with
//! `wasm-pack build crates/wasm-demo --target web`.

use pencilbench_core::adversarial::{adversarial_sweep, fit_powerlaw, OdecoSpec};
use pencilbench_core::conditioning::limiting_ccdf;
use pencilbench_core::mc::{run_kappa_ccdf, McConfig, Sampling};
use serde_json::json;
use wasm_bindgen::prelude::wasm_bindgen;

/// Limiting ccdf curves `P[kappa > alpha * r^{2/(m3-1)}]` for the requested
/// third dimension, sampled log-uniformly over `[alpha_min, alpha_max]`.
/// Returns `{"m3": .., "rank": .., "points": [[alpha, x, prob], ..]}`.
#[wasm_bindgen]
pub fn limiting_ccdf_curve(
    m3: usize,
    rank: usize,
    alpha_min: f64,
    alpha_max: f64,
    points: usize,
) -> String {
    match curve_impl(m3, rank, alpha_min, alpha_max, points) {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e.to_string() }).to_string(),
    }
}

fn curve_impl(
    m3: usize,
    rank: usize,
    alpha_min: f64,
    alpha_max: f64,
    points: usize,
) -> Result<serde_json::Value, pencilbench_core::Error> {
    let n = points.clamp(2, 4096);
    let scale = (rank.max(1) as f64).powf(2.0 / (m3 as f64 - 1.0));
    let (lo, hi) = (alpha_min.max(1e-6), alpha_max.max(alpha_min * 1.0001));
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / (n - 1) as f64;
        let alpha = lo * (hi / lo).powf(t);
        let p = limiting_ccdf(m3, alpha)?;
        rows.push(json!([alpha, alpha * scale, p]));
    }
    Ok(json!({ "m3": m3, "rank": rank, "points": rows }))
}

/// Monte Carlo condition-number tail for `15 x 15 x n3` rank-15 tensors with
/// orthonormal A, B factors, overlaid with the limiting bound. Returns
/// `{"empirical": [[x, p], ..], "bound": [[x, p], ..], "trials": ..,
/// "infinite": ..}`.
#[wasm_bindgen]
pub fn kappa_ccdf_demo(n3: usize, trials: usize, seed: u64) -> String {
    let n3 = n3.clamp(2, 15);
    let trials = trials.clamp(10, 5000);
    let rank = 15;
    let cfg = McConfig {
        dims: (15, 15, n3),
        rank,
        trials,
        sampling: Sampling::OrthonormalAbGaussianC,
        master_seed: seed,
        alpha_grid: vec![],
    };
    let series = match run_kappa_ccdf(&cfg) {
        Ok(s) => s,
        Err(e) => return json!({ "error": e.to_string() }).to_string(),
    };
    let step = (series.samples.len() / 256).max(1);
    let empirical: Vec<serde_json::Value> = series
        .samples
        .iter()
        .step_by(step)
        .map(|&x| json!([x, series.ccdf(x)]))
        .collect();
    let scale = (rank as f64).powf(2.0 / (n3 as f64 - 1.0));
    let bound: Vec<serde_json::Value> = (0..200)
        .filter_map(|i| {
            let alpha = 0.2 * (4000.0_f64 / 0.2).powf(i as f64 / 199.0);
            limiting_ccdf(n3, alpha)
                .ok()
                .map(|p| json!([alpha * scale, p]))
        })
        .collect();
    json!({
        "empirical": empirical,
        "bound": bound,
        "trials": trials,
        "infinite": series.infinite_count,
    })
    .to_string()
}

/// Adversarial sweep on a small instance (12 x 9 x 6, rank 4): perturbation
/// size against the pipeline's forward error and the refined forward error.
/// Returns `{"rows": [[epsilon, pba_error, refined_error], ..],
/// "fit_coefficient": .., "fit_exponent": ..}`.
#[wasm_bindgen]
pub fn sweep_demo(kmin: u32, kmax: u32, seed: u64) -> String {
    let kmin = kmin.clamp(1, 45);
    let kmax = kmax.clamp(kmin, 45);
    let spec = match OdecoSpec::from_seed((12, 9, 6), 4, seed) {
        Ok(s) => s,
        Err(e) => return json!({ "error": e.to_string() }).to_string(),
    };
    let rows = match adversarial_sweep(&spec, (kmin, kmax), true) {
        Ok(r) => r,
        Err(e) => return json!({ "error": e.to_string() }).to_string(),
    };
    let fit_points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.epsilon_k <= 1e-3 && r.pba_forward_error > 0.0)
        .map(|r| (r.epsilon_k, r.pba_forward_error))
        .collect();
    let fit = if fit_points.len() >= 2 {
        fit_powerlaw(&fit_points).ok()
    } else {
        None
    };
    let data: Vec<serde_json::Value> = rows
        .iter()
        .map(|r| json!([r.epsilon_k, r.pba_forward_error, r.refined_forward_error]))
        .collect();
    json!({
        "rows": data,
        "fit_coefficient": fit.map(|f| f.0),
        "fit_exponent": fit.map(|f| f.1),
    })
    .to_string()
}
