//! Transform-domain solver: the rotated data are moved to the `M` domain and
//! every frontal slice is fitted as an independent HPSD subproblem.

use serde::{Deserialize, Serialize};

use crate::dp::{self, SolverOptions, Subproblem};
use crate::error::{Result, StpcaError};
use crate::linalg::{self, CMat};
use crate::rng;
use crate::score::{Granularity, ScoreMap, Scenario};
use crate::tensor::{self, DenseTensor, OrderSet, TransformKind, TransformMatrix};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MpConfig {
    pub order_set: OrderSet,
    pub transform: TransformKind,
    /// Matrix for [`TransformKind::Custom`].
    #[serde(skip)]
    pub custom_transform: Option<CMat>,
    /// One value per slice, or a single value for all.
    pub lambda: Vec<f64>,
    pub eta: Vec<f64>,
    #[serde(default)]
    pub options: SolverOptions,
}

impl MpConfig {
    pub fn new(order_set: OrderSet, lambda: f64, eta: f64) -> Self {
        Self {
            order_set,
            transform: TransformKind::Identity,
            custom_transform: None,
            lambda: vec![lambda],
            eta: vec![eta],
            options: SolverOptions::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.options.seed = seed;
        self
    }

    pub fn with_transform(mut self, kind: TransformKind) -> Self {
        self.transform = kind;
        self
    }

    pub fn lambda_i(&self, i: usize) -> f64 {
        *self.lambda.get(i).unwrap_or(&self.lambda[0])
    }

    pub fn eta_i(&self, i: usize) -> f64 {
        *self.eta.get(i).unwrap_or(&self.eta[0])
    }

    pub fn transform_matrix(&self, p: usize) -> Result<TransformMatrix> {
        match (self.transform, &self.custom_transform) {
            (TransformKind::Custom, Some(m)) => {
                let t = TransformMatrix::custom(m.clone())?;
                if t.side() != p {
                    return Err(StpcaError::Mismatch(format!(
                        "transform side {} differs from rotated third extent {}",
                        t.side(),
                        p
                    )));
                }
                Ok(t)
            }
            (kind, _) => TransformMatrix::from_kind(kind, p),
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        self.options.validate()?;
        for (name, v) in [("lambda", &self.lambda), ("eta", &self.eta)] {
            if v.is_empty() || (v.len() != 1 && v.len() != p) {
                return Err(StpcaError::Invalid(format!("{} needs 1 or {} values, got {}", name, p, v.len())));
            }
            if v.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
                return Err(StpcaError::Invalid(format!("{} must be finite and nonnegative", name)));
            }
        }
        Ok(())
    }
}

/// Rotated data in the transform domain.
#[derive(Debug, Clone)]
pub struct Prepared {
    /// `p` slices of size `q × n`.
    pub slices: Vec<CMat>,
    pub transform: TransformMatrix,
    /// Shape of the data before rotation.
    pub data_shape: [usize; 3],
}

/// Rotates `data` (`d × m × n`, samples last) by the order set and applies `M` along mode 3.
pub fn prepare(data: &DenseTensor, config: &MpConfig) -> Result<Prepared> {
    if data.order() != 3 {
        return Err(StpcaError::Shape(format!("expected a third-order tensor, got order {}", data.order())));
    }
    let rotated = tensor::rotate(data, config.order_set)?;
    let p = rotated.shape()[2];
    let transform = config.transform_matrix(p)?;
    let hat = transform.apply(&rotated)?;
    let s = data.shape();
    Ok(Prepared { slices: hat.frontal_slices(), transform, data_shape: [s[0], s[1], s[2]] })
}

#[derive(Debug, Clone)]
pub struct SliceFit {
    pub recon: CMat,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Fits slice `index` (which keys the seeded initialization).
pub fn fit_slice(slice: &CMat, index: usize, lambda: f64, eta: f64, opts: &SolverOptions) -> Result<SliceFit> {
    if !linalg::all_finite(slice) {
        return Err(StpcaError::Numerical("non-finite slice data".into()));
    }
    let q = slice.nrows();
    let c = linalg::frob_sq(slice);
    if c == 0.0 {
        return Ok(SliceFit { recon: linalg::zeros(q, q), objective_trace: vec![0.0], converged: true, iterations: 0 });
    }
    // Conjugate transpose keeps S Hermitian for complex data.
    let s = linalg::mul_adj(slice, slice);
    let sub = Subproblem { sxy: &s, syy: &s, c, lambda, eta };
    let a0 = dp::init_recon(q, rng::derive_seed(opts.seed, index as u64));
    let fit = dp::fit_block(&sub, a0, opts)?;
    Ok(SliceFit { recon: fit.recon, objective_trace: fit.trace, converged: fit.converged, iterations: fit.iterations })
}

#[derive(Debug, Clone)]
pub struct MpModel {
    pub order_set: OrderSet,
    pub transform: TransformMatrix,
    pub data_shape: [usize; 3],
    /// Transform-domain `q × q` HPSD slices.
    pub slices: Vec<CMat>,
    pub objective_traces: Vec<Vec<f64>>,
    pub converged: Vec<bool>,
    pub iterations: Vec<usize>,
}

fn solve_all(prep: &Prepared, config: &MpConfig) -> Result<Vec<SliceFit>> {
    let work = |i: usize| {
        fit_slice(&prep.slices[i], i, config.lambda_i(i), config.eta_i(i), &config.options)
            .map_err(|e| StpcaError::Slice { slice: i, source: Box::new(e) })
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..prep.slices.len()).into_par_iter().map(work).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..prep.slices.len()).map(work).collect()
    }
}

/// Fits every slice; results do not depend on execution order.
pub fn fit(data: &DenseTensor, config: &MpConfig) -> Result<MpModel> {
    let prep = prepare(data, config)?;
    config.validate(prep.slices.len())?;
    let fits = solve_all(&prep, config)?;
    let mut model = MpModel {
        order_set: config.order_set,
        transform: prep.transform,
        data_shape: prep.data_shape,
        slices: Vec::with_capacity(fits.len()),
        objective_traces: Vec::with_capacity(fits.len()),
        converged: Vec::with_capacity(fits.len()),
        iterations: Vec::with_capacity(fits.len()),
    };
    for f in fits {
        model.slices.push(f.recon);
        model.objective_traces.push(f.objective_trace);
        model.converged.push(f.converged);
        model.iterations.push(f.iterations);
    }
    Ok(model)
}

/// Sum of the per-slice objectives of `model` on `data`.
pub fn mp_objective(data: &DenseTensor, model: &MpModel, config: &MpConfig) -> Result<f64> {
    let prep = prepare(data, config)?;
    if prep.slices.len() != model.slices.len() {
        return Err(StpcaError::Mismatch(format!("{} slices for {} model slices", prep.slices.len(), model.slices.len())));
    }
    let mut total = 0.0;
    for (i, (x, a)) in prep.slices.iter().zip(&model.slices).enumerate() {
        if a.nrows() != x.nrows() || a.ncols() != x.nrows() {
            return Err(StpcaError::Mismatch(format!("model slice {} has side {}", i, a.nrows())));
        }
        let s = linalg::mul_adj(x, x);
        let sub = Subproblem { sxy: &s, syy: &s, c: linalg::frob_sq(x), lambda: config.lambda_i(i), eta: config.eta_i(i) };
        total += sub.value(a);
    }
    Ok(total)
}

/// Transform-domain slices mapped back by `M⁻¹`.
pub fn spatial_slices(model: &MpModel) -> Result<Vec<CMat>> {
    let stack = DenseTensor::from_frontal_slices(&model.slices)?;
    Ok(model.transform.apply_inverse(&stack)?.frontal_slices())
}

/// Column norms of each spatial slice, assembled in `d × m` sample geometry.
pub fn score(model: &MpModel, scenario: Scenario) -> Result<ScoreMap> {
    if model.slices.is_empty() {
        return Err(StpcaError::Invalid("model has no slices".into()));
    }
    let [d, m, _] = model.data_shape;
    let mut map = vec![0.0; d * m];
    for (i, a) in spatial_slices(model)?.iter().enumerate() {
        for (j, s) in linalg::col_norms(a).into_iter().enumerate() {
            // Dir1 slices are columns of the sample map, Dir2 slices are rows.
            let (r, c) = if model.order_set == OrderSet::DIR1 { (j, i) } else { (i, j) };
            map[r + d * c] = s;
        }
    }
    let full = ScoreMap::new(vec![d, m], map, Granularity::PerElement)?;
    Ok(match scenario {
        Scenario::TubeWise => full,
        Scenario::SliceWise => full.per_dimension(),
    })
}
