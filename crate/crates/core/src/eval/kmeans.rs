//! Lloyd's k-means with random-point initialization.

use serde::{Deserialize, Serialize};

use crate::error::{Result, StpcaError};
use crate::linalg::c64;
use crate::rng::{self, Rng};
use crate::tensor::DenseTensor;

pub const MAX_ITER: usize = 300;
pub const CENTROID_TOL: f64 = 1e-8;

/// Row-major real feature matrix, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Points {
    pub n: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Points {
    pub fn new(n: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * dim {
            return Err(StpcaError::Shape(format!("{} values for {}x{} points", data.len(), n, dim)));
        }
        Ok(Self { n, dim, data })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    /// Cluster id of each sample, in `1..=k`.
    pub assignments: Vec<usize>,
    pub restarts: usize,
    pub inertia: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn lloyd(p: &Points, k: usize, r: &mut Rng) -> (Vec<usize>, f64) {
    let (n, dim) = (p.n, p.dim);
    let init = rand::seq::index::sample(r, n, k).into_vec();
    let mut cent: Vec<f64> = init.iter().flat_map(|&i| p.row(i).to_vec()).collect();
    let mut assign = vec![0usize; n];
    let mut dmin = vec![0.0; n];
    for _ in 0..MAX_ITER {
        for i in 0..n {
            let row = p.row(i);
            let (mut best, mut bd) = (0, f64::INFINITY);
            for c in 0..k {
                let d = sq_dist(row, &cent[c * dim..(c + 1) * dim]);
                if d < bd {
                    bd = d;
                    best = c;
                }
            }
            assign[i] = best;
            dmin[i] = bd;
        }
        let mut next = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[assign[i]] += 1;
            for (t, x) in next[assign[i] * dim..(assign[i] + 1) * dim].iter_mut().zip(p.row(i)) {
                *t += x;
            }
        }
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] > 0 {
                next[c * dim..(c + 1) * dim].iter_mut().for_each(|x| *x /= counts[c] as f64);
            } else {
                // Reseed an empty cluster at the point farthest from its centroid.
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .max_by(|&a, &b| dmin[a].total_cmp(&dmin[b]).then(b.cmp(&a)))
                    .unwrap_or(0);
                taken[far] = true;
                next[c * dim..(c + 1) * dim].copy_from_slice(p.row(far));
            }
        }
        let shift = cent.iter().zip(&next).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        cent = next;
        if shift < CENTROID_TOL {
            break;
        }
    }
    let mut inertia = 0.0;
    for i in 0..n {
        let row = p.row(i);
        let (mut best, mut bd) = (0, f64::INFINITY);
        for c in 0..k {
            let d = sq_dist(row, &cent[c * dim..(c + 1) * dim]);
            if d < bd {
                bd = d;
                best = c;
            }
        }
        assign[i] = best;
        inertia += bd;
    }
    (assign, inertia)
}

/// Best-inertia clustering over `restarts` seeded Lloyd runs.
pub fn kmeans(points: &Points, k: usize, restarts: usize, seed: u64) -> Result<ClusteringResult> {
    if points.n == 0 {
        return Err(StpcaError::Invalid("k-means on empty input".into()));
    }
    if k < 1 || k > points.n {
        return Err(StpcaError::Invalid(format!("k = {} with {} samples", k, points.n)));
    }
    let restarts = restarts.max(1);
    let mut r = rng::rng(seed);
    let mut best: Option<Vec<usize>> = None;
    let mut best_inertia = f64::INFINITY;
    let mut inertia = Vec::with_capacity(restarts);
    for _ in 0..restarts {
        let (a, e) = lloyd(points, k, &mut r);
        inertia.push(e);
        if e < best_inertia {
            best_inertia = e;
            best = Some(a);
        }
    }
    let assignments = best.expect("at least one restart").into_iter().map(|c| c + 1).collect();
    Ok(ClusteringResult { assignments, restarts, inertia })
}

/// `repetitions` independent clusterings with derived seeds.
pub fn kmeans_repeated(points: &Points, k: usize, repetitions: usize, restarts: usize, seed: u64) -> Result<Vec<ClusteringResult>> {
    (0..repetitions).map(|i| kmeans(points, k, restarts, rng::derive_seed(seed, i as u64))).collect()
}

fn arg(z: c64) -> f64 {
    let a = z.im.atan2(z.re);
    if a == -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        a
    }
}

/// Amplitude and phase `(|z|, arg z)` with `arg z ∈ (−π, π]`.
pub fn complex_encode(z: c64) -> (f64, f64) {
    (z.norm(), arg(z))
}

/// Sample-by-feature matrix for the selected features.
///
/// Tube-wise features are sample elements (linear index into the sample); each
/// contributes `|z|` and `arg z`. Slice-wise features are mode-1 rows; each
/// contributes its whole row, as real values for real data and amplitude/phase
/// pairs otherwise.
pub fn encode_features(t: &DenseTensor, features: &[usize], slice_wise: bool) -> Result<Points> {
    let shape = t.shape();
    let n = *shape.last().expect("order >= 1");
    let per = t.len() / n;
    let data = t.data();
    let real = t.is_real();
    let cols: Vec<usize> = if slice_wise {
        let d1 = shape[0];
        if let Some(&j) = features.iter().find(|&&j| j >= d1) {
            return Err(StpcaError::Invalid(format!("feature {} outside {} rows", j, d1)));
        }
        features.iter().flat_map(|&j| (0..per / d1).map(move |k| j + d1 * k)).collect()
    } else {
        if let Some(&j) = features.iter().find(|&&j| j >= per) {
            return Err(StpcaError::Invalid(format!("feature {} outside {} elements", j, per)));
        }
        features.to_vec()
    };
    let complex = !(slice_wise && real);
    let dim = if complex { 2 * cols.len() } else { cols.len() };
    let mut out = Vec::with_capacity(n * dim);
    for s in 0..n {
        let base = per * s;
        if complex {
            out.extend(cols.iter().map(|&c| data[base + c].norm()));
            out.extend(cols.iter().map(|&c| arg(data[base + c])));
        } else {
            out.extend(cols.iter().map(|&c| data[base + c].re));
        }
    }
    Points::new(n, dim, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cplx;

    #[test]
    fn encode_examples() {
        assert_eq!(complex_encode(cplx(1.0, 0.0)), (1.0, 0.0));
        let (m, a) = complex_encode(cplx(0.0, 1.0));
        assert_eq!(m, 1.0);
        assert!((a - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert_eq!(complex_encode(cplx(-2.0, 0.0)), (2.0, std::f64::consts::PI));
        assert_eq!(complex_encode(cplx(-2.0, -0.0)), (2.0, std::f64::consts::PI));
    }

    #[test]
    fn single_cluster_and_separated_pairs() {
        let p = Points::new(4, 1, vec![0.0, 0.1, 10.0, 10.1]).unwrap();
        let r = kmeans(&p, 1, 3, 0).unwrap();
        assert!(r.assignments.iter().all(|&a| a == 1));
        let r = kmeans(&p, 2, 5, 0).unwrap();
        assert_eq!(r.assignments[0], r.assignments[1]);
        assert_eq!(r.assignments[2], r.assignments[3]);
        assert_ne!(r.assignments[0], r.assignments[2]);
        assert_eq!(r, kmeans(&p, 2, 5, 0).unwrap());
        assert!(kmeans(&p, 5, 1, 0).is_err());
    }
}
