//! Seeded synthetic benchmarks: multichannel hypersphere orbits (slice-wise,
//! real) and uniform-rectangular-array snapshots (tube-wise, complex).
//!
//! Feature indices are 0-based linear indices into the score geometry: a
//! channel index for slice-wise data, `u + rows·v` for array unit `(u, v)`.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StpcaError};
use crate::linalg::{c64, cplx};
use crate::rng::{self, Rng};
use crate::score::Scenario;
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTensorDataset {
    /// Samples are frontal slices (last mode).
    pub tensor: DenseTensor,
    /// Class id of each sample (1-based).
    pub labels: Vec<usize>,
    pub true_features: Vec<usize>,
    pub scenario: Scenario,
}

impl LabeledTensorDataset {
    pub fn new(tensor: DenseTensor, labels: Vec<usize>, true_features: Vec<usize>, scenario: Scenario) -> Result<Self> {
        let n = *tensor.shape().last().expect("order >= 1");
        if tensor.order() < 2 || labels.len() != n {
            return Err(StpcaError::Mismatch(format!("{} labels for {} samples", labels.len(), n)));
        }
        let nf = feature_count(tensor.shape(), scenario);
        if let Some(&j) = true_features.iter().find(|&&j| j >= nf) {
            return Err(StpcaError::Invalid(format!("true feature {} outside {} features", j, nf)));
        }
        Ok(Self { tensor, labels, true_features, scenario })
    }

    pub fn samples(&self) -> usize {
        self.labels.len()
    }

    pub fn classes(&self) -> usize {
        let mut l = self.labels.clone();
        l.sort_unstable();
        l.dedup();
        l.len()
    }

    pub fn feature_count(&self) -> usize {
        feature_count(self.tensor.shape(), self.scenario)
    }
}

fn feature_count(shape: &[usize], scenario: Scenario) -> usize {
    match scenario {
        Scenario::SliceWise => shape[0],
        Scenario::TubeWise => shape[..shape.len() - 1].iter().product(),
    }
}

fn balanced_labels(r: &mut Rng, n: usize, classes: usize) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..n).map(|i| i % classes + 1).collect();
    labels.shuffle(r);
    labels
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitSpec {
    /// Ambient dimension of the orbit (3, 4 or 5); there are `3n` channels.
    pub n: usize,
    pub series_len: usize,
    pub samples: usize,
    /// Orbit radius of class 1 and class 2.
    pub radii: [f64; 2],
    /// Angular velocity range in radians per step.
    pub omega: [f64; 2],
    pub noise_sigma: f64,
    /// Scale each channel by its largest magnitude into `[-1, 1]`.
    pub normalize: bool,
    pub seed: u64,
}

impl Default for OrbitSpec {
    fn default() -> Self {
        Self {
            n: 3,
            series_len: 41,
            samples: 100,
            radii: [1.0, 2.0],
            omega: [0.5, 1.5],
            noise_sigma: 1.0,
            normalize: true,
            seed: 0,
        }
    }
}

impl OrbitSpec {
    pub fn new(n: usize, seed: u64) -> Self {
        Self { n, seed, ..Self::default() }
    }

    pub fn channels(&self) -> usize {
        3 * self.n
    }

    pub fn validate(&self) -> Result<()> {
        if !(3..=5).contains(&self.n) {
            return Err(StpcaError::Invalid(format!("orbit dimension must be 3, 4 or 5, got {}", self.n)));
        }
        if self.series_len < 1 || self.samples < 2 {
            return Err(StpcaError::Invalid("orbit needs a series length >= 1 and at least 2 samples".into()));
        }
        if self.radii.iter().any(|&r| !(r > 0.0 && r.is_finite())) || self.radii[0] == self.radii[1] {
            return Err(StpcaError::Invalid("radii must be positive, finite and distinct".into()));
        }
        if !(self.omega[0] <= self.omega[1]) || !(self.noise_sigma >= 0.0) {
            return Err(StpcaError::Invalid("invalid angular velocity range or noise level".into()));
        }
        Ok(())
    }
}

/// Random orthonormal pair in `R^n` by Gram-Schmidt.
fn orthonormal_pair(r: &mut Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
    loop {
        let u: Vec<f64> = (0..n).map(|_| rng::normal(r)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng::normal(r)).collect();
        let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nu < 1e-8 {
            continue;
        }
        let u: Vec<f64> = u.iter().map(|x| x / nu).collect();
        let d: f64 = u.iter().zip(&w).map(|(a, b)| a * b).sum();
        let w: Vec<f64> = w.iter().zip(&u).map(|(b, a)| b - d * a).collect();
        let nw = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nw < 1e-8 {
            continue;
        }
        return (u, w.iter().map(|x| x / nw).collect());
    }
}

/// `3n × series_len × samples` tensor; the first `n` channels carry great-circle
/// motion of radius `radii[class]`, the rest are Gaussian noise.
pub fn gen_orbit(spec: &OrbitSpec) -> Result<LabeledTensorDataset> {
    spec.validate()?;
    let mut r = rng::rng(spec.seed);
    let (n, ch, len) = (spec.n, spec.channels(), spec.series_len);
    let labels = balanced_labels(&mut r, spec.samples, 2);
    let mut data = vec![0.0f64; ch * len * spec.samples];
    for (s, &label) in labels.iter().enumerate() {
        let radius = spec.radii[label - 1];
        let (u, w) = orthonormal_pair(&mut r, n);
        let omega = r.gen_range(spec.omega[0]..=spec.omega[1]);
        let phase = r.gen_range(0.0..2.0 * PI);
        for t in 0..len {
            let ang = omega * t as f64 + phase;
            let (c, si) = (ang.cos(), ang.sin());
            let base = ch * (t + len * s);
            for k in 0..n {
                data[base + k] = radius * (c * u[k] + si * w[k]);
            }
            for k in n..ch {
                data[base + k] = spec.noise_sigma * rng::normal(&mut r);
            }
        }
    }
    if spec.normalize {
        for k in 0..ch {
            let m = data.iter().skip(k).step_by(ch).fold(0.0f64, |m, x| m.max(x.abs()));
            if m > 0.0 {
                data.iter_mut().skip(k).step_by(ch).for_each(|x| *x /= m);
            }
        }
    }
    let tensor = DenseTensor::from_real(vec![ch, len, spec.samples], &data)?;
    LabeledTensorDataset::new(tensor, labels, (0..n).collect(), Scenario::SliceWise)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorPattern {
    None,
    Random,
    Horizontal,
    Vertical,
    Rectangular,
}

impl std::str::FromStr for ErrorPattern {
    type Err = StpcaError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(ErrorPattern::None),
            "random" => Ok(ErrorPattern::Random),
            "horizontal" => Ok(ErrorPattern::Horizontal),
            "vertical" => Ok(ErrorPattern::Vertical),
            "rectangular" => Ok(ErrorPattern::Rectangular),
            _ => Err(StpcaError::Invalid(format!("unknown error pattern {:?}", s))),
        }
    }
}

impl ErrorPattern {
    pub const WITH_ERRORS: [ErrorPattern; 4] =
        [ErrorPattern::Random, ErrorPattern::Horizontal, ErrorPattern::Vertical, ErrorPattern::Rectangular];

    /// Default number of faulty units.
    pub fn default_units(self) -> usize {
        match self {
            ErrorPattern::None => 0,
            ErrorPattern::Rectangular => 4,
            _ => 5,
        }
    }
}

/// Direction of arrival: `theta_deg` off broadside, azimuth `phi_deg`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Doa {
    pub theta_deg: f64,
    pub phi_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArraySignalSpec {
    pub case: u8,
    /// Units per array row and column.
    pub grid: [usize; 2],
    pub samples: usize,
    pub doas: Vec<Doa>,
    pub error_pattern: ErrorPattern,
    pub error_units: usize,
    /// Range of the gain magnitude of a faulty unit.
    pub gain: [f64; 2],
    /// Noise level relative to the unit-power source; `None` means noiseless.
    pub snr_db: Option<f64>,
    pub seed: u64,
}

impl Default for ArraySignalSpec {
    fn default() -> Self {
        Self::case1(0)
    }
}

fn doa(theta_deg: f64, phi_deg: f64) -> Doa {
    Doa { theta_deg, phi_deg }
}

impl ArraySignalSpec {
    /// Four sources close to broadside, no faulty units.
    pub fn case1(seed: u64) -> Self {
        Self {
            case: 1,
            grid: [10, 10],
            samples: 800,
            doas: vec![doa(5.0, 0.0), doa(5.0, 90.0), doa(5.0, 180.0), doa(5.0, 270.0)],
            error_pattern: ErrorPattern::None,
            error_units: 0,
            gain: [1.5, 2.5],
            snr_db: Some(20.0),
            seed,
        }
    }

    /// Two sources and faulty units placed by `pattern`.
    pub fn case2(pattern: ErrorPattern, seed: u64) -> Self {
        Self {
            case: 2,
            doas: vec![doa(5.0, 0.0), doa(5.0, 180.0)],
            error_pattern: pattern,
            error_units: pattern.default_units(),
            ..Self::case1(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(StpcaError::Invalid(m));
        match (self.case, self.doas.len()) {
            (1, 4) | (2, 2) => {}
            (1 | 2, k) => return bad(format!("case {} needs {} DOAs, got {}", self.case, 2 * (3 - self.case as usize), k)),
            (c, _) => return bad(format!("unknown case {}", c)),
        }
        if self.grid[0] < 1 || self.grid[1] < 1 || self.samples < 2 {
            return bad("grid and sample count must be positive".into());
        }
        if self.case == 1 && (self.error_pattern != ErrorPattern::None || self.error_units != 0) {
            return bad("case 1 has no faulty units".into());
        }
        if self.case == 2 {
            if self.error_pattern == ErrorPattern::None {
                return bad("case 2 needs an error pattern".into());
            }
            if !(4..=5).contains(&self.error_units) {
                return bad(format!("case 2 uses 4 or 5 faulty units, got {}", self.error_units));
            }
        }
        if self.error_units > self.grid[0] * self.grid[1] {
            return bad("more faulty units than array units".into());
        }
        if !(self.gain[0] > 0.0 && self.gain[0] <= self.gain[1]) {
            return bad("invalid gain range".into());
        }
        if matches!(self.snr_db, Some(s) if !s.is_finite()) {
            return bad("snr_db must be finite; use null for a noiseless array".into());
        }
        Ok(())
    }
}

/// Near-square factorization `h × w = k` with both sides at least 2.
fn block_dims(k: usize) -> Option<(usize, usize)> {
    (2..=k).filter(|h| k % h == 0 && k / h >= 2).min_by_key(|&h| (h as isize - (k / h) as isize).abs()).map(|h| (h, k / h))
}

/// Faulty unit indices (`u + rows·v`, sorted) for a pattern.
pub fn error_unit_indices(r: &mut Rng, pattern: ErrorPattern, units: usize, grid: [usize; 2]) -> Result<Vec<usize>> {
    let [rows, cols] = grid;
    let lin = |u: usize, v: usize| u + rows * v;
    let mut idx = match pattern {
        ErrorPattern::None => Vec::new(),
        ErrorPattern::Random => rand::seq::index::sample(r, rows * cols, units).into_vec(),
        ErrorPattern::Horizontal => {
            if units > cols {
                return Err(StpcaError::Invalid(format!("{} units do not fit in a row of {}", units, cols)));
            }
            let u = r.gen_range(0..rows);
            let v0 = r.gen_range(0..=cols - units);
            (v0..v0 + units).map(|v| lin(u, v)).collect()
        }
        ErrorPattern::Vertical => {
            if units > rows {
                return Err(StpcaError::Invalid(format!("{} units do not fit in a column of {}", units, rows)));
            }
            let v = r.gen_range(0..cols);
            let u0 = r.gen_range(0..=rows - units);
            (u0..u0 + units).map(|u| lin(u, v)).collect()
        }
        ErrorPattern::Rectangular => {
            let (h, w) = block_dims(units)
                .filter(|&(h, w)| h <= rows && w <= cols)
                .ok_or_else(|| StpcaError::Invalid(format!("{} units cannot form a rectangular block", units)))?;
            let u0 = r.gen_range(0..=rows - h);
            let v0 = r.gen_range(0..=cols - w);
            (v0..v0 + w).flat_map(|v| (u0..u0 + h).map(move |u| lin(u, v))).collect()
        }
    };
    idx.sort_unstable();
    Ok(idx)
}

/// Response of the unit at row `u`, column `v` to a plane wave from `d`
/// (half-wavelength spacing).
pub fn steering(u: usize, v: usize, d: Doa) -> c64 {
    let (th, ph) = (d.theta_deg.to_radians(), d.phi_deg.to_radians());
    let ang = PI * (u as f64 * th.sin() * ph.cos() + v as f64 * th.sin() * ph.sin());
    cplx(ang.cos(), ang.sin())
}

/// `rows × cols × samples` complex snapshots, one class per DOA.
pub fn gen_array_signal(spec: &ArraySignalSpec) -> Result<LabeledTensorDataset> {
    spec.validate()?;
    let mut r = rng::rng(spec.seed);
    let [rows, cols] = spec.grid;
    let units = rows * cols;
    let faulty = error_unit_indices(&mut r, spec.error_pattern, spec.error_units, spec.grid)?;
    let mut gain = vec![cplx(1.0, 0.0); units];
    for &j in &faulty {
        let g = r.gen_range(spec.gain[0]..=spec.gain[1]);
        let ph = r.gen_range(0.0..2.0 * PI);
        gain[j] = cplx(g * ph.cos(), g * ph.sin());
    }
    let labels = balanced_labels(&mut r, spec.samples, spec.doas.len());
    let noise_std = spec.snr_db.map(|s| 10f64.powf(-s / 20.0));
    let patterns: Vec<Vec<c64>> = spec
        .doas
        .iter()
        .map(|&d| (0..units).map(|j| gain[j] * steering(j % rows, j / rows, d)).collect())
        .collect();
    let mut data = Vec::with_capacity(units * spec.samples);
    for &label in &labels {
        let ph = r.gen_range(0.0..2.0 * PI);
        let src = cplx(ph.cos(), ph.sin());
        for &a in &patterns[label - 1] {
            let mut z = a * src;
            if let Some(s) = noise_std {
                z += rng::complex_normal(&mut r) * s;
            }
            data.push(z);
        }
    }
    let tensor = DenseTensor::new(vec![rows, cols, spec.samples], data)?;
    LabeledTensorDataset::new(tensor, labels, faulty, Scenario::TubeWise)
}

/// Between-class variance of each feature: `Σ_c (n_c/n)·|μ_c − μ|²`, averaged
/// over the elements of a slice-wise feature.
pub fn bcv(dataset: &LabeledTensorDataset) -> Result<Vec<f64>> {
    let mut classes: Vec<usize> = dataset.labels.clone();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(StpcaError::Invalid("between-class variance needs at least 2 classes".into()));
    }
    let n = dataset.samples();
    let per = dataset.tensor.len() / n;
    let data = dataset.tensor.data();
    let mut mean = vec![cplx(0.0, 0.0); per];
    let mut class_mean = vec![vec![cplx(0.0, 0.0); per]; classes.len()];
    let mut counts = vec![0usize; classes.len()];
    for (s, l) in dataset.labels.iter().enumerate() {
        let c = classes.binary_search(l).expect("label present");
        counts[c] += 1;
        for e in 0..per {
            let z = data[e + per * s];
            mean[e] += z;
            class_mean[c][e] += z;
        }
    }
    let mut elem = vec![0.0; per];
    for e in 0..per {
        let mu = mean[e] / n as f64;
        for c in 0..classes.len() {
            let mc = class_mean[c][e] / counts[c] as f64;
            elem[e] += counts[c] as f64 / n as f64 * (mc - mu).norm_sqr();
        }
    }
    Ok(match dataset.scenario {
        Scenario::TubeWise => elem,
        Scenario::SliceWise => {
            let d1 = dataset.tensor.shape()[0];
            let mut rows = vec![0.0; d1];
            for (e, v) in elem.iter().enumerate() {
                rows[e % d1] += v;
            }
            let k = (per / d1) as f64;
            rows.into_iter().map(|v| v / k).collect()
        }
    })
}
