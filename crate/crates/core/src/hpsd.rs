//! Hermitian eigendecomposition, projection onto the HPSD cone, `ℓ2,1` norms
//! and the reweighting diagonal.

use faer::Mat;

use crate::error::{Result, StpcaError};
use crate::linalg::{self, cplx, CMat};

/// Default `ε1` of the reweighting diagonal.
pub const DEFAULT_EPS1: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct HermitianEig {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Unitary; column `i` pairs with `eigenvalues[i]`.
    pub eigenvectors: CMat,
}

impl HermitianEig {
    pub fn new(h: &CMat) -> Result<Self> {
        let (eigenvalues, eigenvectors) = linalg::hermitian_eig(h)?;
        Ok(Self { eigenvalues, eigenvectors })
    }

    /// `V diag(f(λ)) V^H`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> CMat {
        let n = self.eigenvalues.len();
        let keep: Vec<(usize, f64)> = self
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(i, &l)| (i, f(l)))
            .filter(|&(_, v)| v != 0.0)
            .collect();
        if keep.is_empty() {
            return linalg::zeros(n, n);
        }
        let scaled = Mat::from_fn(n, keep.len(), |r, c| self.eigenvectors[(r, keep[c].0)] * keep[c].1);
        let basis = Mat::from_fn(n, keep.len(), |r, c| self.eigenvectors[(r, keep[c].0)]);
        exact_hermitian(&linalg::mul_adj(&scaled, &basis))
    }
}

fn check_square(a: &CMat) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(StpcaError::Shape(format!("expected a square matrix, got {}x{}", a.nrows(), a.ncols())));
    }
    Ok(())
}

/// Mirrors the lower triangle so that the result equals its adjoint bit for bit.
fn exact_hermitian(a: &CMat) -> CMat {
    let n = a.nrows();
    Mat::from_fn(n, n, |i, j| {
        if i == j {
            cplx(a[(i, i)].re, 0.0)
        } else if i > j {
            (a[(i, j)] + a[(j, i)].conj()) * 0.5
        } else {
            ((a[(j, i)] + a[(i, j)].conj()) * 0.5).conj()
        }
    })
}

/// `(A + A^H) / 2`, Hermitian by construction.
pub fn hermitian_part(a: &CMat) -> Result<CMat> {
    check_square(a)?;
    Ok(exact_hermitian(a))
}

/// Nearest HPSD matrix to the Hermitian part of `a`: negative eigenvalues are
/// clamped to zero.
pub fn project_hpsd(a: &CMat) -> Result<CMat> {
    let h = hermitian_part(a)?;
    if h.nrows() == 1 {
        return Ok(Mat::from_fn(1, 1, |_, _| cplx(h[(0, 0)].re.max(0.0), 0.0)));
    }
    if linalg::all_finite(&h) && linalg::is_positive_definite(&h) {
        return Ok(h);
    }
    let eig = HermitianEig::new(&h)?;
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return Ok(h);
    }
    Ok(eig.reconstruct_with(|l| l.max(0.0)))
}

/// Smallest eigenvalue of the Hermitian part.
pub fn min_eigenvalue(a: &CMat) -> Result<f64> {
    let h = hermitian_part(a)?;
    let (vals, _) = linalg::hermitian_eig(&h)?;
    Ok(vals.last().copied().unwrap_or(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Sum of column norms.
    Columns,
    /// Sum of row norms.
    Rows,
}

pub fn l21_norm(a: &CMat, axis: Axis) -> f64 {
    match axis {
        Axis::Columns => linalg::col_norms(a).iter().sum(),
        Axis::Rows => linalg::row_norms(a).iter().sum(),
    }
}

/// Diagonal `W_jj = 1 / (2·sqrt(‖a_j‖² + ε1))` over the columns `a_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightDiagonal {
    pub diag: Vec<f64>,
}

impl WeightDiagonal {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }
}

pub fn update_weight(a: &CMat, eps1: f64) -> Result<WeightDiagonal> {
    if !(eps1 > 0.0) {
        return Err(StpcaError::Invalid(format!("eps1 must be positive, got {}", eps1)));
    }
    let diag = (0..a.ncols())
        .map(|j| 1.0 / (2.0 * (a.col(j).squared_norm_l2() + eps1).sqrt()))
        .collect();
    Ok(WeightDiagonal { diag })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m2(v: [[f64; 2]; 2]) -> CMat {
        linalg::from_real(2, 2, |i, j| v[i][j])
    }

    #[test]
    fn hermitian_part_examples() {
        let h = hermitian_part(&m2([[0.0, 2.0], [0.0, 0.0]])).unwrap();
        assert_eq!(h, m2([[0.0, 1.0], [1.0, 0.0]]));
        let herm = Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 1) => cplx(1.0, 2.0),
            (1, 0) => cplx(1.0, -2.0),
            _ => cplx(3.0 + i as f64, 0.0),
        });
        assert_eq!(hermitian_part(&herm).unwrap(), herm);
        assert!(hermitian_part(&linalg::zeros(2, 3)).is_err());
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_hpsd(&m2([[1.0, 0.0], [0.0, -1.0]])).unwrap(), m2([[1.0, 0.0], [0.0, 0.0]]));
        let p = project_hpsd(&m2([[0.0, 2.0], [0.0, 0.0]])).unwrap();
        assert!(linalg::dist(&p, &m2([[0.5, 0.5], [0.5, 0.5]])) < 1e-12);
        let psd = m2([[2.0, 1.0], [1.0, 2.0]]);
        assert!(linalg::dist(&project_hpsd(&psd).unwrap(), &psd) < 1e-10);
    }

    #[test]
    fn projection_rejects_non_finite() {
        let mut a = m2([[1.0, 0.0], [0.0, 1.0]]);
        a[(1, 1)] = cplx(f64::NAN, 0.0);
        assert!(project_hpsd(&a).is_err());
    }

    #[test]
    fn l21_examples() {
        assert_eq!(l21_norm(&linalg::identity(3), Axis::Columns), 3.0);
        assert_eq!(l21_norm(&linalg::zeros(2, 2), Axis::Columns), 0.0);
        assert_eq!(l21_norm(&m2([[3.0, 0.0], [4.0, 0.0]]), Axis::Columns), 5.0);
        assert_eq!(l21_norm(&m2([[3.0, 0.0], [4.0, 0.0]]), Axis::Rows), 7.0);
    }

    #[test]
    fn weight_examples() {
        let w = update_weight(&linalg::zeros(2, 2), 1e-12).unwrap();
        assert!(w.diag.iter().all(|&x| (x - 5e5).abs() < 1e-6));
        let w = update_weight(&linalg::identity(2), 1e-300).unwrap();
        assert!(w.diag.iter().all(|&x| x == 0.5));
        let w = update_weight(&m2([[3.0, 0.0], [0.0, 0.0]]), 1e-12).unwrap();
        assert!((w.diag[0] - 1.0 / 6.0).abs() < 1e-9);
        assert!(update_weight(&linalg::zeros(1, 1), 0.0).is_err());
    }
}
