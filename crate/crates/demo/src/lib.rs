//! Browser front end: simulate a series, run the tests, and look at the
//! limit laws. Every export takes and returns plain strings so the page
//! needs no generated type bindings.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use fcov::asymptotics::{simulate_limit, LimitFunctional};
use fcov::bootstrap::replicate_rng;
use fcov::pipeline::{prepare_test, sample_scores, TestSettings};
use fcov::scores::Changepoint;
use fcov::simulation::{change_window, coefficients_to_sample, generate_pair, SimulationConfig};

const PREVIEW_CURVES: usize = 12;

#[derive(Serialize)]
struct MethodTrace {
    method: String,
    statistic: f64,
    p_value: f64,
    changepoint: Vec<usize>,
    /// `T_k / n` for `k = 1..=n`.
    path: Vec<f64>,
    /// Sorted bootstrap replicates, for the null histogram.
    replicates: Vec<f64>,
}

#[derive(Serialize)]
struct SeriesReport {
    n: usize,
    alternative: String,
    window: Option<(usize, usize)>,
    grid: Vec<f64>,
    curves: Vec<Vec<f64>>,
    methods: Vec<MethodTrace>,
}

#[derive(Serialize)]
struct LimitReport {
    dim: usize,
    functional: String,
    mean: f64,
    edges: Vec<f64>,
    counts: Vec<usize>,
    alphas: Vec<f64>,
    quantiles: Vec<f64>,
}

fn changepoint_indices(c: &Changepoint) -> Vec<usize> {
    match *c {
        Changepoint::Single(k) => vec![k],
        Changepoint::Interval(a, b) => vec![a, b],
    }
}

/// Native core of [`simulate_and_test`].
pub fn run_series(config: &str) -> Result<String, String> {
    let cfg = SimulationConfig::from_kv_str(config).map_err(|e| e.to_string())?;
    cfg.validate().map_err(|e| e.to_string())?;
    let mut rng = replicate_rng(cfg.seed, 0);
    let (_, coef) = generate_pair(&cfg, &mut rng).map_err(|e| e.to_string())?;
    let x = coefficients_to_sample(&coef, &cfg).map_err(|e| e.to_string())?;
    let alternative = cfg.tested_alternative();
    let n = x.n();
    let step = (n / PREVIEW_CURVES).max(1);
    let curves = (0..n).step_by(step).map(|t| x.values().row(t).iter().copied().collect()).collect();
    let mut methods = Vec::new();
    for (i, &method) in cfg.methods.iter().enumerate() {
        let settings = TestSettings {
            method,
            alternative,
            d: cfg.d,
            eps1: cfg.eps1,
            eps2: cfg.eps2,
            block: cfg.block,
            replicates: cfg.bootstrap,
            seed: cfg.seed.wrapping_add(i as u64 + 1),
        };
        let run = || -> fcov::error::Result<MethodTrace> {
            let scores = sample_scores(&x, &settings)?;
            let prepared = prepare_test(&scores, &settings)?;
            let stat = prepared.statistic()?;
            let path = prepared.path()?.into_iter().map(|v| v / n as f64).collect();
            let boot = prepared.bootstrap(settings.replicates, settings.seed, false)?;
            let mut replicates = boot.replicate_values.clone();
            replicates.sort_by(f64::total_cmp);
            Ok(MethodTrace {
                method: method.name().to_string(),
                statistic: stat.value,
                p_value: boot.p_value,
                changepoint: changepoint_indices(&stat.changepoint_estimate),
                path,
                replicates,
            })
        };
        methods.push(run().map_err(|e| format!("{}: {e}", method.name()))?);
    }
    let report = SeriesReport {
        n,
        alternative: alternative.to_string(),
        window: change_window(&cfg),
        grid: x.domain().points().map(<[f64]>::to_vec).unwrap_or_default(),
        curves,
        methods,
    };
    serde_json::to_string(&report).map_err(|e| e.to_string())
}

/// Native core of [`limit_law`].
pub fn run_limit(dim: usize, functional: &str, draws: usize, resolution: usize, seed: u64, bins: usize) -> Result<String, String> {
    let functional: LimitFunctional = functional.parse().map_err(|e: fcov::error::FcovError| e.to_string())?;
    let sample = simulate_limit(dim, functional, draws, resolution, seed).map_err(|e| e.to_string())?;
    let bins = bins.max(1);
    let alphas = vec![0.10, 0.05, 0.025, 0.01];
    let quantiles = sample.quantiles(&alphas);
    // the top bin stops at the 0.5% quantile so the tail does not flatten the plot
    let hi = sample.quantile(0.005).max(f64::MIN_POSITIVE);
    let width = hi / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in &sample.draws {
        let b = ((v / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let report = LimitReport {
        dim,
        functional: functional.to_string(),
        mean: sample.mean(),
        edges: (0..=bins).map(|i| i as f64 * width).collect(),
        counts,
        alphas,
        quantiles,
    };
    serde_json::to_string(&report).map_err(|e| e.to_string())
}

/// Simulate one series from `key = value` lines and test it with every
/// configured method. Returns JSON with preview curves and CUSUM paths.
#[wasm_bindgen]
pub fn simulate_and_test(config: &str) -> Result<String, JsValue> {
    run_series(config).map_err(|e| JsValue::from_str(&e))
}

/// Histogram and upper quantiles of a Brownian-bridge limit law.
#[wasm_bindgen]
pub fn limit_law(dim: usize, functional: &str, draws: usize, resolution: usize, seed: u64, bins: usize) -> Result<String, JsValue> {
    run_limit(dim, functional, draws, resolution, seed, bins).map_err(|e| JsValue::from_str(&e))
}
