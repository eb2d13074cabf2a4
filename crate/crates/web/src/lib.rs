//! WebAssembly bindings for the browser demo. Each export takes plain numbers
//! and strings and returns a JSON document; the `*_report` functions carry the
//! logic and also run natively.

use serde::Serialize;
use stpca::eval::grid::{evaluate_selection, ClusterMetrics, ClusterProtocol, Method, MethodSpec};
use stpca::eval::metrics::{poc, potc};
use stpca::score::ScoreMap;
use stpca::synth::{self, ArraySignalSpec, ErrorPattern, LabeledTensorDataset, OrbitSpec};
use stpca::tensor;
use wasm_bindgen::prelude::*;

type Result<T> = std::result::Result<T, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn select(ds: &LabeledTensorDataset, method: &str, lambda: f64, eta: f64, seed: u64) -> Result<ScoreMap> {
    let method: Method = method.parse().map_err(err)?;
    if !(lambda >= 0.0 && eta >= 0.0 && lambda.is_finite() && eta.is_finite()) {
        return Err("lambda and eta must be finite and nonnegative".into());
    }
    let x = tensor::centralize(&ds.tensor, ds.tensor.order()).map_err(err)?;
    MethodSpec::new(method).select(&x, ds.scenario, lambda, eta, seed).map_err(err)
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(err)
}

#[derive(Debug, Serialize)]
pub struct OrbitReport {
    pub channels: usize,
    pub scores: Vec<f64>,
    pub selection: Vec<usize>,
    pub truth: Vec<usize>,
    pub poc: f64,
    pub potc: f64,
    /// One sample per class: `series[c][channel][t]`.
    pub series: Vec<Vec<Vec<f64>>>,
}

/// Orbit data of dimension `n`; the top `n` channels of `method` at `(λ, η)`.
pub fn orbit_report(n: usize, seed: u64, method: &str, lambda: f64, eta: f64) -> Result<OrbitReport> {
    let ds = synth::gen_orbit(&OrbitSpec::new(n, seed)).map_err(err)?;
    let map = select(&ds, method, lambda, eta, seed)?;
    let selection = map.top(n);
    let sel = [selection.clone()];
    let shape = ds.tensor.shape().to_vec();
    let (ch, len) = (shape[0], shape[1]);
    let series = [1, 2]
        .iter()
        .filter_map(|c| ds.labels.iter().position(|l| l == c))
        .map(|s| (0..ch).map(|i| (0..len).map(|t| ds.tensor.get(&[i, t, s]).re).collect()).collect())
        .collect();
    Ok(OrbitReport {
        channels: ch,
        scores: map.scores().to_vec(),
        poc: poc(&sel, &ds.true_features, n),
        potc: potc(&sel, &ds.true_features),
        selection,
        truth: ds.true_features.clone(),
        series,
    })
}

#[derive(Debug, Serialize)]
pub struct HeatmapReport {
    pub rows: usize,
    pub cols: usize,
    /// Row-major, scaled so the largest score is 1.
    pub levels: Vec<f64>,
    pub selection: Vec<usize>,
    pub truth: Vec<usize>,
    pub poc: f64,
    pub potc: f64,
}

/// Array Signal case 2 with faulty units placed by `pattern`; the score map of
/// `method` and its top units, as many as are faulty.
pub fn heatmap_report(pattern: &str, seed: u64, method: &str, lambda: f64, eta: f64) -> Result<HeatmapReport> {
    let pattern: ErrorPattern = pattern.parse().map_err(err)?;
    let spec = ArraySignalSpec { samples: 400, ..ArraySignalSpec::case2(pattern, seed) };
    let ds = synth::gen_array_signal(&spec).map_err(err)?;
    let map = select(&ds, method, lambda, eta, seed)?;
    let h = ds.true_features.len();
    let (rows, cols) = (spec.grid[0], spec.grid[1]);
    let max = map.scores().iter().copied().fold(0.0, f64::max);
    let mut levels = vec![0.0; rows * cols];
    for (j, s) in map.scores().iter().enumerate() {
        levels[(j % rows) * cols + j / rows] = if max > 0.0 { s / max } else { 0.0 };
    }
    let selection = map.top(h);
    let sel = [selection.clone()];
    Ok(HeatmapReport {
        rows,
        cols,
        levels,
        poc: poc(&sel, &ds.true_features, h),
        potc: potc(&sel, &ds.true_features),
        selection,
        truth: ds.true_features.clone(),
    })
}

#[derive(Debug, Serialize)]
pub struct ClusterReport {
    pub selection: Vec<usize>,
    pub selected: ClusterMetrics,
    pub all_features: ClusterMetrics,
}

/// k-means on the top `h` units of Array Signal case 1 against all units.
pub fn cluster_report(seed: u64, method: &str, lambda: f64, eta: f64, h: usize, repetitions: usize) -> Result<ClusterReport> {
    let spec = ArraySignalSpec { samples: 400, ..ArraySignalSpec::case1(seed) };
    let ds = synth::gen_array_signal(&spec).map_err(err)?;
    if h < 1 || h > ds.feature_count() {
        return Err(format!("h must be in 1..={}", ds.feature_count()));
    }
    let map = select(&ds, method, lambda, eta, seed)?;
    let selection = map.top(h);
    let protocol = ClusterProtocol { repetitions: repetitions.max(1), seed, ..ClusterProtocol::default() };
    let all: Vec<usize> = (0..ds.feature_count()).collect();
    Ok(ClusterReport {
        selected: evaluate_selection(&ds, &selection, &protocol).map_err(err)?,
        all_features: evaluate_selection(&ds, &all, &protocol).map_err(err)?,
        selection,
    })
}

fn js(r: Result<String>) -> std::result::Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn orbit_select(n: usize, seed: u32, method: &str, lambda: f64, eta: f64) -> std::result::Result<String, JsError> {
    js(orbit_report(n, seed as u64, method, lambda, eta).and_then(|r| to_json(&r)))
}

#[wasm_bindgen]
pub fn array_heatmap(pattern: &str, seed: u32, method: &str, lambda: f64, eta: f64) -> std::result::Result<String, JsError> {
    js(heatmap_report(pattern, seed as u64, method, lambda, eta).and_then(|r| to_json(&r)))
}

#[wasm_bindgen]
pub fn array_cluster(seed: u32, method: &str, lambda: f64, eta: f64, h: usize, repetitions: usize) -> std::result::Result<String, JsError> {
    js(cluster_report(seed as u64, method, lambda, eta, h, repetitions).and_then(|r| to_json(&r)))
}
