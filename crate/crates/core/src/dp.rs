//! Direction-unfolding solver: alternating HPSD reconstruction matrices over
//! disjoint direction sets, with the 1SD, 2SD and MD variants.
//!
//! Subproblem `e` minimizes, over HPSD `A`,
//!
//! ```text
//! f(A) = ‖X_L − A·Y_L‖² + λ‖A‖₂,₁ + η·tr(A)
//!      = c − 2·Re tr(A·S_xyᴴ) + Re tr(A·S_yy·Aᴴ) + λ‖A‖₂,₁ + η·tr(A)
//! ```
//!
//! where `Y` is the data with every other reconstruction matrix applied,
//! `S_xy = X_L·Y_Lᴴ` and `S_yy = Y_L·Y_Lᴴ`. The reweighted closed-form update
//! is accepted only while it does not increase `f`; small subproblems are then
//! polished by a splitting method on the exact objective.

use std::str::FromStr;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StpcaError};
use crate::hpsd::{self, Axis, WeightDiagonal};
use crate::linalg::{self, cplx, CMat};
use crate::rng;
use crate::score::{Granularity, ScoreMap, Scenario};
use crate::tensor::{self, DenseTensor, DirectionSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DpVariant {
    #[serde(rename = "1SD")]
    OneSd,
    #[serde(rename = "2SD")]
    TwoSd,
    #[serde(rename = "MD")]
    Md,
}

impl DpVariant {
    pub const ALL: [DpVariant; 3] = [DpVariant::OneSd, DpVariant::TwoSd, DpVariant::Md];

    /// Direction sets for second-order samples.
    pub fn direction_sets(self) -> Vec<DirectionSet> {
        let d = |m: Vec<usize>| DirectionSet::new(m).expect("static direction set");
        match self {
            DpVariant::OneSd => vec![d(vec![1])],
            DpVariant::TwoSd => vec![d(vec![1]), d(vec![2])],
            DpVariant::Md => vec![d(vec![1, 2])],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DpVariant::OneSd => "1SD",
            DpVariant::TwoSd => "2SD",
            DpVariant::Md => "MD",
        }
    }
}

impl FromStr for DpVariant {
    type Err = StpcaError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "1SD" => Ok(DpVariant::OneSd),
            "2SD" => Ok(DpVariant::TwoSd),
            "MD" => Ok(DpVariant::Md),
            _ => Err(StpcaError::Invalid(format!("unknown variant {:?}", s))),
        }
    }
}

/// Loop controls shared by both solver families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub eps1: f64,
    pub eps2: f64,
    /// Relative objective change that stops the outer loop.
    pub tol: f64,
    pub max_iter: usize,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    /// Iterations of the splitting polish after the reweighted updates; 0 disables it.
    pub refine_max_iter: usize,
    /// Largest matrix side that gets the polish.
    pub refine_max_side: usize,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            eps1: hpsd::DEFAULT_EPS1,
            eps2: 1e-8,
            tol: 1e-6,
            max_iter: 200,
            inner_tol: 1e-6,
            inner_max_iter: 50,
            refine_max_iter: 200,
            refine_max_side: 64,
            seed: 0,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(StpcaError::Invalid(m.to_string()));
        if !(self.eps1 > 0.0) {
            return bad("eps1 must be positive");
        }
        if !(self.eps2 > 0.0) {
            return bad("eps2 must be positive");
        }
        if !(self.tol >= 0.0) || !(self.inner_tol >= 0.0) {
            return bad("tolerances must be nonnegative");
        }
        if self.max_iter < 1 || self.inner_max_iter < 1 {
            return bad("iteration caps must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpConfig {
    pub variant: DpVariant,
    pub direction_sets: Vec<DirectionSet>,
    /// One value per direction set, or a single value for all.
    pub lambda: Vec<f64>,
    pub eta: Vec<f64>,
    #[serde(default)]
    pub options: SolverOptions,
}

impl DpConfig {
    pub fn new(variant: DpVariant, lambda: f64, eta: f64) -> Self {
        Self {
            variant,
            direction_sets: variant.direction_sets(),
            lambda: vec![lambda],
            eta: vec![eta],
            options: SolverOptions::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.options.seed = seed;
        self
    }

    pub fn lambda_k(&self, k: usize) -> f64 {
        *self.lambda.get(k).unwrap_or(&self.lambda[0])
    }

    pub fn eta_k(&self, k: usize) -> f64 {
        *self.eta.get(k).unwrap_or(&self.eta[0])
    }

    /// Checks the configuration against samples of order `sample_order`.
    pub fn validate(&self, sample_order: usize) -> Result<()> {
        self.options.validate()?;
        let s = self.direction_sets.len();
        if s == 0 {
            return Err(StpcaError::Invalid("no direction sets".into()));
        }
        for (k, l) in self.direction_sets.iter().enumerate() {
            l.check_order(sample_order)?;
            for other in &self.direction_sets[k + 1..] {
                if !l.is_disjoint(other) {
                    return Err(StpcaError::Direction(format!(
                        "direction sets {:?} and {:?} overlap",
                        l.modes(),
                        other.modes()
                    )));
                }
            }
        }
        for (name, v) in [("lambda", &self.lambda), ("eta", &self.eta)] {
            if v.len() != 1 && v.len() != s {
                return Err(StpcaError::Invalid(format!("{} needs 1 or {} values, got {}", name, s, v.len())));
            }
        }
        // Zero lambda is accepted for the unregularized limit.
        if self.lambda.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
            return Err(StpcaError::Invalid("lambda must be finite and nonnegative".into()));
        }
        if self.eta.iter().any(|&e| !(e >= 0.0 && e.is_finite())) {
            return Err(StpcaError::Invalid("eta must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitStatus {
    Converged,
    MaxIterations,
    /// The data were identically zero; the zero model was returned.
    ZeroData,
}

#[derive(Debug, Clone)]
pub struct DpModel {
    pub variant: DpVariant,
    pub direction_sets: Vec<DirectionSet>,
    pub sample_shape: Vec<usize>,
    pub recon: Vec<CMat>,
    /// Objective at initialization followed by one value per outer iteration.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub status: FitStatus,
}

/// `G·Gᴴ / b` for a seeded standard complex-normal `G`.
pub fn init_recon(b: usize, seed: u64) -> CMat {
    let mut r = rng::rng(seed);
    let g = Mat::from_fn(b, b, |_, _| rng::complex_normal(&mut r));
    let gg = linalg::scale(&linalg::mul_adj(&g, &g), 1.0 / b.max(1) as f64);
    hpsd::hermitian_part(&gg).expect("square")
}

/// Cross scatter `X·Yᴴ` of stacked unfoldings.
pub fn scatter(x: &CMat, y: &CMat) -> Result<CMat> {
    if x.nrows() != y.nrows() || x.ncols() != y.ncols() {
        return Err(StpcaError::Mismatch(format!(
            "scatter of {}x{} and {}x{}",
            x.nrows(),
            x.ncols(),
            y.nrows(),
            y.ncols()
        )));
    }
    Ok(linalg::mul_adj(x, y))
}

/// `Σ_i X_i·Y_iᴴ` over per-sample unfoldings.
pub fn scatter_sum(xs: &[CMat], ys: &[CMat]) -> Result<CMat> {
    if xs.len() != ys.len() || xs.is_empty() {
        return Err(StpcaError::Mismatch(format!("{} and {} samples", xs.len(), ys.len())));
    }
    let mut s = scatter(&xs[0], &ys[0])?;
    for (x, y) in xs.iter().zip(ys).skip(1) {
        s = &s + &scatter(x, y)?;
    }
    Ok(s)
}

/// Closed-form reweighted update for `Y = X` (single scatter `S`).
pub fn update_recon(s: &CMat, w: &WeightDiagonal, lambda: f64, eta: f64, eps2: f64) -> Result<CMat> {
    update_recon_cross(s, s, w, lambda, eta, eps2)
}

/// `P_H+((S_xy − η/2·I)·(S_yy + λW + ε2·I)⁻¹)` by a right linear solve.
pub fn update_recon_cross(
    sxy: &CMat,
    syy: &CMat,
    w: &WeightDiagonal,
    lambda: f64,
    eta: f64,
    eps2: f64,
) -> Result<CMat> {
    let b = syy.nrows();
    if syy.ncols() != b || sxy.nrows() != b || sxy.ncols() != b || w.len() != b {
        return Err(StpcaError::Mismatch(format!("update with side {} and weight length {}", b, w.len())));
    }
    let mut rhs = sxy.clone();
    linalg::add_diag(&mut rhs, -eta / 2.0);
    let mut sys = syy.clone();
    for j in 0..b {
        sys[(j, j)].re += lambda * w.diag[j] + eps2;
    }
    let x = linalg::solve_right(&rhs, &sys)?;
    hpsd::project_hpsd(&x)
}

/// Relative column norms below which [`Subproblem::prune`] tries zero columns.
const PRUNE_RATIOS: [f64; 3] = [1e-1, 1e-2, 1e-3];

/// Exact subproblem objective.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Subproblem<'a> {
    pub sxy: &'a CMat,
    pub syy: &'a CMat,
    pub c: f64,
    pub lambda: f64,
    pub eta: f64,
}

impl Subproblem<'_> {
    fn side(&self) -> usize {
        self.syy.nrows()
    }

    pub fn value(&self, a: &CMat) -> f64 {
        let b = self.side();
        let asy = linalg::mul(a, self.syy);
        let (mut cross, mut quad) = (0.0, 0.0);
        for j in 0..b {
            for i in 0..b {
                cross += (a[(i, j)] * self.sxy[(i, j)].conj()).re;
                quad += (asy[(i, j)] * a[(i, j)].conj()).re;
            }
        }
        let tr = linalg::trace(a).re;
        self.c - 2.0 * cross + quad + self.lambda * hpsd::l21_norm(a, Axis::Columns) + self.eta * tr
    }

    fn scalar_solution(&self) -> CMat {
        let (sxy, syy) = (self.sxy[(0, 0)].re, self.syy[(0, 0)].re);
        let num = 2.0 * sxy - self.lambda - self.eta;
        let a = if syy > 0.0 && num > 0.0 { num / (2.0 * syy) } else { 0.0 };
        Mat::from_fn(1, 1, |_, _| cplx(a, 0.0))
    }

    /// Reweighted updates from `a0`, then the polish; never returns a worse point than `a0`.
    pub fn solve(&self, a0: CMat, opts: &SolverOptions) -> Result<(CMat, f64)> {
        if self.side() == 1 {
            let a = self.scalar_solution();
            let f = self.value(&a);
            return Ok((a, f));
        }
        let f0 = self.value(&a0);
        if !f0.is_finite() {
            return Err(StpcaError::Numerical("non-finite subproblem objective".into()));
        }
        let (mut a, mut f) = self.reweighted(a0, f0, opts, opts.inner_max_iter)?;
        if opts.refine_max_iter > 0 && self.side() <= opts.refine_max_side {
            if let Some((ar, fr, support)) = self.refine(&a, opts)? {
                if fr < f {
                    a = ar;
                    f = fr;
                }
                // Reweighting cannot reach exactly-zero columns; rerun it on the
                // support found by the shrinkage split.
                if !support.is_empty() && support.len() < self.side() {
                    let (sxy, syy) = (submatrix(self.sxy, &support), submatrix(self.syy, &support));
                    let reduced = Subproblem { sxy: &sxy, syy: &syy, ..*self };
                    let start = submatrix(&a, &support);
                    let fs = reduced.value(&start);
                    let (ar, fr) = reduced.reweighted(start, fs, opts, opts.inner_max_iter.max(opts.refine_max_iter))?;
                    if fr < f {
                        a = embed(&ar, &support, self.side());
                        f = fr;
                    }
                }
            }
            (a, f) = self.prune(a, f, opts)?;
        }
        Ok((a, f))
    }

    /// Drops columns that are negligible next to the largest one and reruns the
    /// reweighted updates on the rest; the best point that lowers `f` is kept.
    fn prune(&self, a: CMat, f: f64, opts: &SolverOptions) -> Result<(CMat, f64)> {
        let norms = linalg::col_norms(&a);
        let max = norms.iter().fold(0.0f64, |m, &x| m.max(x));
        let nonzero = norms.iter().filter(|&&x| x > 0.0).count();
        let (mut best, mut fb) = (a.clone(), f);
        let mut tried = Vec::new();
        for ratio in PRUNE_RATIOS {
            let support: Vec<usize> = (0..norms.len()).filter(|&j| norms[j] > ratio * max).collect();
            if support.is_empty() || support.len() == nonzero || tried.contains(&support.len()) {
                continue;
            }
            tried.push(support.len());
            let (sxy, syy) = (submatrix(self.sxy, &support), submatrix(self.syy, &support));
            let reduced = Subproblem { sxy: &sxy, syy: &syy, ..*self };
            let start = submatrix(&a, &support);
            let fs = reduced.value(&start);
            let (ar, fr) = reduced.reweighted(start, fs, opts, opts.inner_max_iter.max(opts.refine_max_iter))?;
            if fr < fb {
                best = embed(&ar, &support, self.side());
                fb = fr;
            }
        }
        Ok((best, fb))
    }

    /// Closed-form reweighted updates, each accepted only if `f` does not increase.
    fn reweighted(&self, mut a: CMat, mut f: f64, opts: &SolverOptions, max_iter: usize) -> Result<(CMat, f64)> {
        if self.side() == 1 {
            let s = self.scalar_solution();
            let fs = self.value(&s);
            return Ok(if fs <= f { (s, fs) } else { (a, f) });
        }
        for _ in 0..max_iter {
            let w = hpsd::update_weight(&a, opts.eps1)?;
            let cand = update_recon_cross(self.sxy, self.syy, &w, self.lambda, self.eta, opts.eps2)?;
            let fc = self.value(&cand);
            if !fc.is_finite() {
                return Err(StpcaError::Numerical("non-finite subproblem objective".into()));
            }
            if fc > f {
                break;
            }
            let rel = (f - fc) / f.abs().max(f64::MIN_POSITIVE);
            a = cand;
            f = fc;
            if rel < opts.inner_tol {
                break;
            }
        }
        Ok((a, f))
    }

    /// Splitting method on `A = B` (HPSD) and `A = C` (column shrinkage),
    /// warm-started at `a0`, with residual balancing of the penalty.
    fn refine(&self, a0: &CMat, opts: &SolverOptions) -> Result<Option<(CMat, f64, Vec<usize>)>> {
        let b = self.side();
        let (lam, q) = linalg::hermitian_eig(&hpsd::hermitian_part(self.syy)?)?;
        let scale = lam.iter().map(|l| l.abs()).fold(0.0f64, f64::max).max(self.lambda).max(self.eta);
        if !(scale > 0.0) {
            return Ok(None);
        }
        let mut rho = (lam.iter().sum::<f64>() / b as f64).max(1e-3 * scale);
        let mut bm = a0.clone();
        let mut cm = a0.clone();
        let mut u = linalg::zeros(b, b);
        let mut v = linalg::zeros(b, b);
        let mut rhs0 = linalg::scale(self.sxy, 2.0);
        linalg::add_diag(&mut rhs0, -self.eta);
        let eps = 1e-12 * scale.max(1.0);
        for _ in 0..opts.refine_max_iter {
            let z = &(&bm - &u) + &(&cm - &v);
            let r = &rhs0 + &linalg::scale(&z, rho);
            // A·(2·S_yy + 2ρ·I) = R via the eigenbasis of S_yy.
            let rq = linalg::mul(&r, &q);
            let scaled = Mat::from_fn(b, b, |i, j| rq[(i, j)] / (2.0 * lam[j].max(0.0) + 2.0 * rho));
            let a = linalg::mul_adj(&scaled, &q);
            let (bo, co) = (bm, cm);
            bm = hpsd::project_hpsd(&(&a + &u))?;
            cm = shrink_columns(&(&a + &v), self.lambda / rho);
            u = &u + &(&a - &bm);
            v = &v + &(&a - &cm);
            let primal = (linalg::frob_sq(&(&a - &bm)) + linalg::frob_sq(&(&a - &cm))).sqrt();
            let dual = rho * (linalg::frob_sq(&(&bm - &bo)) + linalg::frob_sq(&(&cm - &co))).sqrt();
            if !primal.is_finite() || !dual.is_finite() {
                return Err(StpcaError::Numerical("splitting polish diverged".into()));
            }
            if primal < eps && dual < eps {
                break;
            }
            if primal > 10.0 * dual {
                rho *= 2.0;
                u = linalg::scale(&u, 0.5);
                v = linalg::scale(&v, 0.5);
            } else if dual > 10.0 * primal {
                rho *= 0.5;
                u = linalg::scale(&u, 2.0);
                v = linalg::scale(&v, 2.0);
            }
        }
        let support: Vec<usize> = linalg::col_norms(&cm)
            .iter()
            .enumerate()
            .filter(|(_, &n)| n > 0.0)
            .map(|(j, _)| j)
            .collect();
        let cands = [hpsd::project_hpsd(&cm)?, bm];
        let best = cands
            .into_iter()
            .map(|c| {
                let f = self.value(&c);
                (c, f)
            })
            .filter(|(_, f)| f.is_finite())
            .min_by(|x, y| x.1.total_cmp(&y.1));
        Ok(best.map(|(c, f)| (c, f, support)))
    }
}

fn submatrix(a: &CMat, idx: &[usize]) -> CMat {
    Mat::from_fn(idx.len(), idx.len(), |i, j| a[(idx[i], idx[j])])
}

fn embed(a: &CMat, idx: &[usize], n: usize) -> CMat {
    let mut out = linalg::zeros(n, n);
    for (i, &r) in idx.iter().enumerate() {
        for (j, &c) in idx.iter().enumerate() {
            out[(r, c)] = a[(i, j)];
        }
    }
    out
}

/// Column-wise group soft thresholding.
fn shrink_columns(a: &CMat, t: f64) -> CMat {
    let norms = linalg::col_norms(a);
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| {
        let n = norms[j];
        if n <= t || n == 0.0 {
            cplx(0.0, 0.0)
        } else {
            a[(i, j)] * ((n - t) / n)
        }
    })
}

/// Outer-loop state for one fixed scatter pair (a single direction set).
pub(crate) struct BlockFit {
    pub recon: CMat,
    pub trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Repeats the subproblem solve from warm starts until the relative objective
/// change drops below `tol`.
pub(crate) fn fit_block(sub: &Subproblem<'_>, a0: CMat, opts: &SolverOptions) -> Result<BlockFit> {
    let mut a = a0;
    let mut f = sub.value(&a);
    let mut trace = vec![f];
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=opts.max_iter {
        iterations = it;
        let (na, nf) = sub.solve(a, opts)?;
        a = na;
        let rel = (f - nf).abs() / f.abs().max(f64::MIN_POSITIVE);
        f = nf;
        trace.push(f);
        if rel < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(BlockFit { recon: a, trace, converged, iterations })
}

fn sample_shape(samples: &DenseTensor) -> Result<Vec<usize>> {
    if samples.order() < 2 {
        return Err(StpcaError::Shape("samples need at least one feature mode and a sample mode".into()));
    }
    Ok(samples.shape()[..samples.order() - 1].to_vec())
}

fn check_model(samples: &DenseTensor, recon: &[CMat], sets: &[DirectionSet]) -> Result<()> {
    let shape = sample_shape(samples)?;
    if recon.len() != sets.len() {
        return Err(StpcaError::Mismatch(format!("{} matrices for {} direction sets", recon.len(), sets.len())));
    }
    for (a, l) in recon.iter().zip(sets) {
        l.check_order(shape.len())?;
        let b = l.extent(&shape);
        if a.nrows() != b || a.ncols() != b {
            return Err(StpcaError::Mismatch(format!(
                "matrix {}x{} for modes {:?} of extent {}",
                a.nrows(),
                a.ncols(),
                l.modes(),
                b
            )));
        }
    }
    Ok(())
}

fn reconstruct_except(samples: &DenseTensor, recon: &[CMat], sets: &[DirectionSet], skip: Option<usize>) -> Result<DenseTensor> {
    let mut y = samples.clone();
    for (k, (a, l)) in recon.iter().zip(sets).enumerate() {
        if Some(k) != skip {
            y = tensor::apply_along(&y, a, l)?;
        }
    }
    Ok(y)
}

/// All reconstruction matrices except `e` applied, unfolded along `L_e`.
/// Columns are the per-sample unfoldings side by side (samples slowest).
pub fn partial_reconstruct(samples: &DenseTensor, model: &DpModel, e: usize) -> Result<CMat> {
    check_model(samples, &model.recon, &model.direction_sets)?;
    if e >= model.recon.len() {
        return Err(StpcaError::Invalid(format!("active set {} out of {}", e, model.recon.len())));
    }
    let y = reconstruct_except(samples, &model.recon, &model.direction_sets, Some(e))?;
    tensor::unfold(&y, &model.direction_sets[e])
}

/// Samples per block so that one block of the data stays cache resident.
const SCATTER_BLOCK_ELEMS: usize = 1 << 14;

/// `(X_(L_e) Y_(L_e)^H, Y_(L_e) Y_(L_e)^H)` where `Y` applies every matrix but `e`.
/// Accumulated over blocks of samples, which are contiguous column blocks of
/// the unfoldings. With `single` set, `Y = X` and only the first is formed.
fn block_scatter(samples: &DenseTensor, recon: &[CMat], sets: &[DirectionSet], e: usize, single: bool) -> Result<(CMat, CMat)> {
    let n = *samples.shape().last().expect("sample mode");
    let per = samples.len() / n.max(1);
    let block = (SCATTER_BLOCK_ELEMS / per.max(1)).max(1);
    let b = recon[e].nrows();
    let mut sxy = linalg::zeros(b, b);
    let mut syy = linalg::zeros(b, b);
    let mut start = 0;
    while start < n {
        let end = (start + block).min(n);
        let x = samples.last_mode_range(start, end)?;
        let xl = tensor::unfold(&x, &sets[e])?;
        if single {
            sxy += linalg::mul_adj(&xl, &xl);
        } else {
            let y = reconstruct_except(&x, recon, sets, Some(e))?;
            let yl = tensor::unfold(&y, &sets[e])?;
            sxy += linalg::mul_adj(&xl, &yl);
            syy += linalg::mul_adj(&yl, &yl);
        }
        start = end;
    }
    if single {
        syy = sxy.clone();
    }
    Ok((sxy, syy))
}

fn regularizer(a: &CMat, lambda: f64, eta: f64) -> f64 {
    lambda * hpsd::l21_norm(a, Axis::Columns) + eta * linalg::trace(a).re
}

fn objective_of(samples: &DenseTensor, recon: &[CMat], config: &DpConfig) -> Result<f64> {
    check_model(samples, recon, &config.direction_sets)?;
    let n = *samples.shape().last().expect("sample mode");
    let block = (SCATTER_BLOCK_ELEMS / (samples.len() / n).max(1)).max(1);
    let mut f = 0.0;
    let mut start = 0;
    while start < n {
        let end = (start + block).min(n);
        let x = samples.last_mode_range(start, end)?;
        let xhat = reconstruct_except(&x, recon, &config.direction_sets, None)?;
        f += x.sub(&xhat)?.norm_sq();
        start = end;
    }
    for (k, a) in recon.iter().enumerate() {
        f += regularizer(a, config.lambda_k(k), config.eta_k(k));
    }
    Ok(f)
}

/// Reconstruction error plus regularizers, computed from the full reconstruction.
pub fn dp_objective(samples: &DenseTensor, model: &DpModel, config: &DpConfig) -> Result<f64> {
    objective_of(samples, &model.recon, config)
}

/// Fits the reconstruction matrices. The last mode of `samples` enumerates samples,
/// which are expected to be centralized.
pub fn fit(samples: &DenseTensor, config: &DpConfig) -> Result<DpModel> {
    let shape = sample_shape(samples)?;
    config.validate(shape.len())?;
    let sets = &config.direction_sets;
    let sides: Vec<usize> = sets.iter().map(|l| l.extent(&shape)).collect();
    let opts = &config.options;
    let c = samples.norm_sq();
    if !c.is_finite() {
        return Err(StpcaError::Numerical("non-finite data".into()));
    }
    let mut model = DpModel {
        variant: config.variant,
        direction_sets: sets.clone(),
        sample_shape: shape,
        recon: sides.iter().map(|&b| linalg::zeros(b, b)).collect(),
        objective_trace: vec![0.0],
        converged: true,
        iterations: 0,
        status: FitStatus::ZeroData,
    };
    if c == 0.0 {
        log::warn!("all-zero data: returning the zero model");
        return Ok(model);
    }
    model.recon = sides.iter().enumerate().map(|(k, &b)| init_recon(b, rng::derive_seed(opts.seed, k as u64))).collect();

    if sets.len() == 1 {
        let (s, _) = block_scatter(samples, &model.recon, sets, 0, true)?;
        let sub = Subproblem { sxy: &s, syy: &s, c, lambda: config.lambda_k(0), eta: config.eta_k(0) };
        let a0 = std::mem::replace(&mut model.recon[0], linalg::zeros(0, 0));
        let fit = fit_block(&sub, a0, opts)?;
        model.recon[0] = fit.recon;
        model.objective_trace = fit.trace;
        model.converged = fit.converged;
        model.iterations = fit.iterations;
        model.status = if fit.converged { FitStatus::Converged } else { FitStatus::MaxIterations };
        return Ok(model);
    }

    let mut f = objective_of(samples, &model.recon, config)?;
    model.objective_trace = vec![f];
    model.converged = false;
    model.status = FitStatus::MaxIterations;
    // Sweeps use the reweighted updates alone; the last sweep adds the polish.
    let light = SolverOptions { refine_max_iter: 0, ..opts.clone() };
    let mut polish = false;
    balance_scales(&mut model.recon, config);
    for it in 1..=opts.max_iter {
        model.iterations = it;
        let last = polish || it == opts.max_iter;
        let sweep_opts = if last { opts } else { &light };
        let mut total = f;
        for e in 0..sets.len() {
            let (sxy, syy) = block_scatter(samples, &model.recon, sets, e, false)?;
            let sub = Subproblem { sxy: &sxy, syy: &syy, c, lambda: config.lambda_k(e), eta: config.eta_k(e) };
            let a0 = std::mem::replace(&mut model.recon[e], linalg::zeros(0, 0));
            let (a, fe) = sub.solve(a0, sweep_opts)?;
            model.recon[e] = a;
            let others: f64 = (0..sets.len())
                .filter(|&k| k != e)
                .map(|k| regularizer(&model.recon[k], config.lambda_k(k), config.eta_k(k)))
                .sum();
            total = fe + others;
        }
        if !total.is_finite() {
            return Err(StpcaError::Numerical("non-finite objective; check data scaling".into()));
        }
        total -= balance_scales(&mut model.recon, config);
        model.objective_trace.push(total);
        let rel = (f - total).abs() / f.abs().max(f64::MIN_POSITIVE);
        f = total;
        if last {
            model.converged = polish;
            if polish {
                model.status = FitStatus::Converged;
            }
            break;
        }
        if rel < opts.tol {
            polish = true;
        }
    }
    Ok(model)
}

/// Rescales `A_k` by `c_k > 0` with `Π c_k = 1`, which leaves the reconstruction
/// unchanged, to minimize the regularizer sum. Returns the decrease.
fn balance_scales(recon: &mut [CMat], config: &DpConfig) -> f64 {
    let r: Vec<f64> = recon.iter().enumerate().map(|(k, a)| regularizer(a, config.lambda_k(k), config.eta_k(k))).collect();
    if r.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return 0.0;
    }
    let before: f64 = r.iter().sum();
    let g = (r.iter().map(|x| x.ln()).sum::<f64>() / r.len() as f64).exp();
    let after = g * r.len() as f64;
    if !(after < before) {
        return 0.0;
    }
    for (a, rk) in recon.iter_mut().zip(&r) {
        *a = linalg::scale(a, g / rk);
    }
    before - after
}

/// Element scores over `modes` (1-based, increasing): the column norm of the
/// Kronecker product of the reconstruction matrices factorizes into a product
/// of per-set column norms. Modes outside every set contribute a factor 1.
fn element_scores(model: &DpModel, modes: &[usize]) -> (Vec<usize>, Vec<f64>) {
    let shape: Vec<usize> = modes.iter().map(|&m| model.sample_shape[m - 1]).collect();
    let norms: Vec<Vec<f64>> = model.recon.iter().map(linalg::col_norms).collect();
    let n: usize = shape.iter().product();
    let mut scores = Vec::with_capacity(n);
    let mut idx = vec![0usize; shape.len()];
    for _ in 0..n {
        let mut s = 1.0;
        for (l, nk) in model.direction_sets.iter().zip(&norms) {
            let mut col = 0;
            let mut stride = 1;
            for &m in l.modes() {
                let pos = modes.iter().position(|&x| x == m).expect("covered mode");
                col += idx[pos] * stride;
                stride *= model.sample_shape[m - 1];
            }
            s *= nk[col];
        }
        scores.push(s);
        for k in 0..idx.len() {
            idx[k] += 1;
            if idx[k] < shape[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    (shape, scores)
}

/// Feature scores. Slice-wise data are scored per mode-1 dimension (row sums of
/// the element map over the modes the model covers); tube-wise data per element
/// of the sample.
pub fn score(model: &DpModel, scenario: Scenario) -> Result<ScoreMap> {
    if model.recon.is_empty() {
        return Err(StpcaError::Invalid("model has no reconstruction matrices".into()));
    }
    match scenario {
        Scenario::TubeWise => {
            let modes: Vec<usize> = (1..=model.sample_shape.len()).collect();
            let (shape, s) = element_scores(model, &modes);
            ScoreMap::new(shape, s, Granularity::PerElement)
        }
        Scenario::SliceWise => {
            let mut modes: Vec<usize> = model.direction_sets.iter().flat_map(|l| l.modes().to_vec()).collect();
            modes.sort_unstable();
            let (shape, s) = element_scores(model, &modes);
            Ok(ScoreMap::new(shape, s, Granularity::PerElement)?.per_dimension())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> CMat {
        Mat::from_fn(1, 1, |_, _| cplx(v, 0.0))
    }

    #[test]
    fn update_scalar_cases() {
        let w = WeightDiagonal { diag: vec![1.0] };
        let a = update_recon(&scalar(1.0), &w, 0.0, 0.0, 1e-8).unwrap();
        assert!((a[(0, 0)].re - 1.0 / (1.0 + 1e-8)).abs() < 1e-15);
        let a = update_recon(&scalar(1.0), &w, 0.0, 4.0, 1e-8).unwrap();
        assert_eq!(a[(0, 0)].re, 0.0);
    }

    #[test]
    fn update_diagonal_case() {
        let s = linalg::diag(&[2.0, 0.0]);
        let w = WeightDiagonal { diag: vec![1e-9, 1e-9] };
        let a = update_recon(&s, &w, 1e-9, 0.0, 1e-8).unwrap();
        assert!(linalg::dist(&a, &linalg::diag(&[1.0, 0.0])) < 1e-6);
    }

    #[test]
    fn init_is_deterministic_psd() {
        let a = init_recon(8, 3);
        assert_eq!(a, init_recon(8, 3));
        let p = hpsd::project_hpsd(&a).unwrap();
        assert!(linalg::dist(&p, &a) <= 1e-12);
        let one = init_recon(1, 5);
        assert!(one[(0, 0)].re >= 0.0 && one[(0, 0)].im == 0.0);
    }

    #[test]
    fn scatter_single_column() {
        let x = linalg::from_real(2, 1, |i, _| if i == 0 { 1.0 } else { 0.0 });
        assert_eq!(scatter(&x, &x).unwrap(), linalg::diag(&[1.0, 0.0]));
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("2sd".parse::<DpVariant>().unwrap(), DpVariant::TwoSd);
        assert!("3SD".parse::<DpVariant>().is_err());
    }

    #[test]
    fn overlapping_sets_rejected() {
        let mut c = DpConfig::new(DpVariant::TwoSd, 1.0, 1.0);
        c.direction_sets = vec![DirectionSet::new(vec![1]).unwrap(), DirectionSet::new(vec![1, 2]).unwrap()];
        assert!(c.validate(2).is_err());
    }

    #[test]
    fn kronecker_scores() {
        let model = DpModel {
            variant: DpVariant::TwoSd,
            direction_sets: DpVariant::TwoSd.direction_sets(),
            sample_shape: vec![2, 2],
            recon: vec![linalg::diag(&[2.0, 0.0]), linalg::diag(&[3.0, 1.0])],
            objective_trace: vec![],
            converged: true,
            iterations: 1,
            status: FitStatus::Converged,
        };
        let m = score(&model, Scenario::TubeWise).unwrap();
        assert_eq!(m.scores(), &[6.0, 0.0, 2.0, 0.0]);
        let p = linalg::kron(&model.recon[1], &model.recon[0]);
        let norms = linalg::col_norms(&p);
        assert_eq!(m.scores(), norms.as_slice());
    }
}
