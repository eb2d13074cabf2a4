//! Regularization grid search and the per-selection clustering protocol.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::kmeans::{encode_features, kmeans_repeated};
use super::metrics::{clustering_acc, mean_std, nmi, poc, potc};
use crate::dp::{self, DpConfig, DpVariant, SolverOptions};
use crate::error::{Result, StpcaError};
use crate::mp::{self, MpConfig};
use crate::rng;
use crate::score::{ScoreMap, Scenario};
use crate::synth::LabeledTensorDataset;
use crate::tensor::{self, DenseTensor, OrderSet, TransformKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Dp(DpVariant),
    Mp(OrderSet),
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Dp(DpVariant::OneSd),
        Method::Dp(DpVariant::TwoSd),
        Method::Dp(DpVariant::Md),
        Method::Mp(OrderSet::DIR1),
        Method::Mp(OrderSet::DIR2),
    ];

    pub fn family(&self) -> &'static str {
        match self {
            Method::Dp(_) => "dp",
            Method::Mp(_) => "mp",
        }
    }

    pub fn variant(&self) -> &'static str {
        match self {
            Method::Dp(v) => v.name(),
            Method::Mp(o) if *o == OrderSet::DIR1 => "Dir1",
            Method::Mp(_) => "Dir2",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.family(), self.variant().to_ascii_lowercase())
    }
}

impl FromStr for Method {
    type Err = StpcaError;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.to_string() == s.to_ascii_lowercase())
            .ok_or_else(|| StpcaError::Invalid(format!("unknown method {:?}", s)))
    }
}

impl TryFrom<String> for Method {
    type Error = StpcaError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> Self {
        m.to_string()
    }
}

/// Solver family, variant and fixed settings; `λ`, `η` and the seed vary per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub method: Method,
    #[serde(default)]
    pub options: SolverOptions,
    #[serde(default = "identity_kind")]
    pub transform: TransformKind,
}

fn identity_kind() -> TransformKind {
    TransformKind::Identity
}

impl MethodSpec {
    pub fn new(method: Method) -> Self {
        Self { method, options: SolverOptions::default(), transform: TransformKind::Identity }
    }

    /// Fits centralized `data` (samples last) and scores the features.
    pub fn select(&self, data: &DenseTensor, scenario: Scenario, lambda: f64, eta: f64, seed: u64) -> Result<ScoreMap> {
        let mut options = self.options.clone();
        options.seed = seed;
        match self.method {
            Method::Dp(v) => {
                let config = DpConfig { options, ..DpConfig::new(v, lambda, eta) };
                dp::score(&dp::fit(data, &config)?, scenario)
            }
            Method::Mp(o) => {
                let config = MpConfig { options, transform: self.transform, ..MpConfig::new(o, lambda, eta) };
                mp::score(&mp::fit(data, &config)?, scenario)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lambda_grid: Vec<f64>,
    pub eta_grid: Vec<f64>,
    /// Number of selected features per run.
    pub h: usize,
}

fn powers(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|e| 10f64.powi(e)).collect()
}

impl GridSpec {
    pub fn new(lambda_grid: Vec<f64>, eta_grid: Vec<f64>, h: usize) -> Self {
        Self { lambda_grid, eta_grid, h }
    }

    /// `{1e-4, ..., 1e4}` for both parameters.
    pub fn wide(h: usize) -> Self {
        Self::new(powers(-4, 4), powers(-4, 4), h)
    }

    /// `{1e-2, ..., 1e2}` for both parameters.
    pub fn narrow(h: usize) -> Self {
        Self::new(powers(-2, 2), powers(-2, 2), h)
    }

    /// Number of parameter combinations.
    pub fn g(&self) -> usize {
        self.lambda_grid.len() * self.eta_grid.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda_grid.is_empty() || self.eta_grid.is_empty() {
            return Err(StpcaError::Invalid("grid has no parameter values".into()));
        }
        if self.h < 1 {
            return Err(StpcaError::Invalid("h must be at least 1".into()));
        }
        if self.lambda_grid.iter().chain(&self.eta_grid).any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(StpcaError::Invalid("grid values must be finite and nonnegative".into()));
        }
        Ok(())
    }

    /// `(λ, η)` pairs, `λ` slowest.
    pub fn combos(&self) -> Vec<(f64, f64)> {
        self.lambda_grid.iter().flat_map(|&l| self.eta_grid.iter().map(move |&e| (l, e))).collect()
    }
}

/// Clustering protocol applied to each selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterProtocol {
    pub enabled: bool,
    pub repetitions: usize,
    /// Lloyd restarts inside one repetition.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for ClusterProtocol {
    fn default() -> Self {
        Self { enabled: true, repetitions: 30, restarts: 1, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterMetrics {
    pub acc_mean: f64,
    pub acc_std: f64,
    pub nmi_mean: f64,
    pub nmi_std: f64,
}

/// k-means with `k` = number of classes on the encoded selection.
pub fn evaluate_selection(dataset: &LabeledTensorDataset, features: &[usize], protocol: &ClusterProtocol) -> Result<ClusterMetrics> {
    let points = encode_features(&dataset.tensor, features, dataset.scenario == Scenario::SliceWise)?;
    let k = dataset.classes();
    let runs = kmeans_repeated(&points, k, protocol.repetitions.max(1), protocol.restarts, protocol.seed)?;
    let accs: Vec<f64> = runs.iter().map(|r| clustering_acc(&r.assignments, &dataset.labels)).collect();
    let nmis: Vec<f64> = runs.iter().map(|r| nmi(&r.assignments, &dataset.labels)).collect();
    let (acc_mean, acc_std) = mean_std(&accs);
    let (nmi_mean, nmi_std) = mean_std(&nmis);
    Ok(ClusterMetrics { acc_mean, acc_std, nmi_mean, nmi_std })
}

/// Result of one `(λ, η)` combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub method: String,
    pub variant: String,
    pub lambda: f64,
    pub eta: f64,
    pub h: usize,
    pub selection: Vec<usize>,
    pub acc_mean: Option<f64>,
    pub acc_std: Option<f64>,
    pub nmi_mean: Option<f64>,
    pub nmi_std: Option<f64>,
    pub poc: Option<f64>,
    pub potc: Option<f64>,
    pub wall_time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub method: String,
    pub variant: String,
    pub h: usize,
    pub g: usize,
    pub cells: Vec<CellRecord>,
    /// Over all successful cells; `None` without ground-truth features.
    pub poc: Option<f64>,
    pub potc: Option<f64>,
    /// Cell with the highest mean ACC.
    pub best_acc: Option<ClusterMetrics>,
    pub failed: usize,
    pub wall_time_s: f64,
}

struct CellFit {
    selection: std::result::Result<Vec<usize>, String>,
    wall: f64,
}

fn fit_cells(data: &DenseTensor, scenario: Scenario, spec: &MethodSpec, grid: &GridSpec, seed: u64) -> Vec<CellFit> {
    let combos = grid.combos();
    let work = |i: usize| {
        let (l, e) = combos[i];
        let t0 = Instant::now();
        let selection = spec
            .select(data, scenario, l, e, rng::derive_seed(seed, i as u64))
            .map(|m| m.top(grid.h))
            .map_err(|err| err.to_string());
        CellFit { selection, wall: t0.elapsed().as_secs_f64() }
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..combos.len()).into_par_iter().map(work).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..combos.len()).map(work).collect()
    }
}

/// Fits every grid cell on the centralized data, records top-`h` selections and
/// aggregates selection stability and clustering quality. Cell failures are
/// recorded, not fatal.
pub fn grid_run(
    dataset: &LabeledTensorDataset,
    spec: &MethodSpec,
    grid: &GridSpec,
    protocol: &ClusterProtocol,
    seed: u64,
) -> Result<GridReport> {
    grid.validate()?;
    let t0 = Instant::now();
    let sample_mode = dataset.tensor.order();
    let data = tensor::centralize(&dataset.tensor, sample_mode)?;
    let fits = fit_cells(&data, dataset.scenario, spec, grid, seed);
    let truth = &dataset.true_features;
    let mut cache: HashMap<Vec<usize>, ClusterMetrics> = HashMap::new();
    let mut cells = Vec::with_capacity(fits.len());
    let mut selections = Vec::new();
    for ((lambda, eta), fit) in grid.combos().into_iter().zip(fits) {
        let mut rec = CellRecord {
            method: spec.method.to_string(),
            variant: spec.method.variant().to_string(),
            lambda,
            eta,
            h: grid.h,
            selection: Vec::new(),
            acc_mean: None,
            acc_std: None,
            nmi_mean: None,
            nmi_std: None,
            poc: None,
            potc: None,
            wall_time_s: fit.wall,
            error: None,
        };
        match fit.selection {
            Ok(sel) => {
                if !truth.is_empty() {
                    rec.poc = Some(poc(std::slice::from_ref(&sel), truth, grid.h));
                    rec.potc = Some(potc(std::slice::from_ref(&sel), truth));
                }
                if protocol.enabled {
                    let mut key = sel.clone();
                    key.sort_unstable();
                    let m = match cache.get(&key) {
                        Some(m) => *m,
                        None => {
                            let m = evaluate_selection(dataset, &sel, protocol)?;
                            cache.insert(key, m);
                            m
                        }
                    };
                    rec.acc_mean = Some(m.acc_mean);
                    rec.acc_std = Some(m.acc_std);
                    rec.nmi_mean = Some(m.nmi_mean);
                    rec.nmi_std = Some(m.nmi_std);
                }
                selections.push(sel.clone());
                rec.selection = sel;
            }
            Err(e) => rec.error = Some(e),
        }
        cells.push(rec);
    }
    let failed = cells.iter().filter(|c| c.error.is_some()).count();
    let (poc_all, potc_all) = if truth.is_empty() || selections.is_empty() {
        (None, None)
    } else {
        (Some(poc(&selections, truth, grid.h)), Some(potc(&selections, truth)))
    };
    let best_acc = cells
        .iter()
        .filter_map(|c| {
            Some(ClusterMetrics { acc_mean: c.acc_mean?, acc_std: c.acc_std?, nmi_mean: c.nmi_mean?, nmi_std: c.nmi_std? })
        })
        .max_by(|a, b| a.acc_mean.total_cmp(&b.acc_mean));
    Ok(GridReport {
        method: spec.method.to_string(),
        variant: spec.method.variant().to_string(),
        h: grid.h,
        g: grid.g(),
        cells,
        poc: poc_all,
        potc: potc_all,
        best_acc,
        failed,
        wall_time_s: t0.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sizes() {
        assert_eq!(GridSpec::wide(3).g(), 81);
        assert_eq!(GridSpec::narrow(5).g(), 25);
        assert_eq!(GridSpec::new(vec![1.0], vec![1.0], 1).g(), 1);
        assert!(GridSpec::new(vec![], vec![1.0], 1).validate().is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert_eq!("dp-1sd".parse::<Method>().unwrap(), Method::Dp(DpVariant::OneSd));
        assert_eq!("mp-dir2".parse::<Method>().unwrap(), Method::Mp(OrderSet::DIR2));
        assert!("mp-dir3".parse::<Method>().is_err());
    }
}
