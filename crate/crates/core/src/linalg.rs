//! Dense complex matrix helpers on top of `faer`.
//!
//! Products, Hermitian eigendecompositions and solves take a real fast path
//! when every imaginary part is exactly zero. Real data keeps the solvers on
//! that path for the whole fit.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};

use crate::error::{Result, StpcaError};

pub use faer::c64;

/// Owned column-major complex matrix.
pub type CMat = Mat<c64>;

#[inline]
pub fn cplx(re: f64, im: f64) -> c64 {
    c64::new(re, im)
}

pub fn zeros(r: usize, c: usize) -> CMat {
    Mat::zeros(r, c)
}

pub fn identity(n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| if i == j { cplx(1.0, 0.0) } else { cplx(0.0, 0.0) })
}

pub fn from_real(r: usize, c: usize, f: impl Fn(usize, usize) -> f64) -> CMat {
    Mat::from_fn(r, c, |i, j| cplx(f(i, j), 0.0))
}

pub fn diag(d: &[f64]) -> CMat {
    let n = d.len();
    Mat::from_fn(n, n, |i, j| if i == j { cplx(d[i], 0.0) } else { cplx(0.0, 0.0) })
}

/// Conjugate transpose.
pub fn adjoint(a: &CMat) -> CMat {
    a.adjoint().to_owned()
}

/// True when every entry has an exactly zero imaginary part.
pub fn is_real(a: &CMat) -> bool {
    (0..a.ncols()).all(|j| (0..a.nrows()).all(|i| a[(i, j)].im == 0.0))
}

pub fn all_finite(a: &CMat) -> bool {
    (0..a.ncols()).all(|j| (0..a.nrows()).all(|i| a[(i, j)].re.is_finite() && a[(i, j)].im.is_finite()))
}

fn real_part(a: &CMat) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)].re)
}

fn embed(a: &Mat<f64>) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| cplx(a[(i, j)], 0.0))
}

/// Matrix product `a * b`.
pub fn mul(a: &CMat, b: &CMat) -> CMat {
    assert_eq!(a.ncols(), b.nrows(), "inner dimensions differ");
    if is_real(a) && is_real(b) {
        embed(&(&real_part(a) * &real_part(b)))
    } else {
        a * b
    }
}

/// Matrix product `a * b^H`.
pub fn mul_adj(a: &CMat, b: &CMat) -> CMat {
    assert_eq!(a.ncols(), b.ncols(), "inner dimensions differ");
    if is_real(a) && is_real(b) {
        embed(&(&real_part(a) * real_part(b).transpose()))
    } else {
        a * b.adjoint()
    }
}

/// Matrix product `a^H * b`.
pub fn adj_mul(a: &CMat, b: &CMat) -> CMat {
    assert_eq!(a.nrows(), b.nrows(), "inner dimensions differ");
    if is_real(a) && is_real(b) {
        embed(&(real_part(a).transpose() * &real_part(b)))
    } else {
        a.adjoint() * b
    }
}

pub fn add(a: &CMat, b: &CMat) -> CMat {
    a + b
}

pub fn sub(a: &CMat, b: &CMat) -> CMat {
    a - b
}

pub fn scale(a: &CMat, s: f64) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s)
}

/// Adds `s` to every diagonal entry in place.
pub fn add_diag(a: &mut CMat, s: f64) {
    for i in 0..a.nrows().min(a.ncols()) {
        a[(i, i)].re += s;
    }
}

pub fn trace(a: &CMat) -> c64 {
    (0..a.nrows().min(a.ncols())).fold(cplx(0.0, 0.0), |acc, i| acc + a[(i, i)])
}

pub fn frob_sq(a: &CMat) -> f64 {
    a.squared_norm_l2()
}

pub fn frob(a: &CMat) -> f64 {
    frob_sq(a).sqrt()
}

pub fn max_abs(a: &CMat) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

/// `‖a - b‖_F`.
pub fn dist(a: &CMat, b: &CMat) -> f64 {
    frob(&(a - b))
}

pub fn col_norms(a: &CMat) -> Vec<f64> {
    (0..a.ncols()).map(|j| a.col(j).norm_l2()).collect()
}

pub fn row_norms(a: &CMat) -> Vec<f64> {
    (0..a.nrows()).map(|i| a.row(i).norm_l2()).collect()
}

/// `Re tr(a * b)` without forming the product.
pub fn re_trace_mul(a: &CMat, b: &CMat) -> f64 {
    assert_eq!(a.ncols(), b.nrows());
    assert_eq!(a.nrows(), b.ncols());
    let mut s = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            s += (a[(i, k)] * b[(k, i)]).re;
        }
    }
    s
}

/// Kronecker product: `(a ⊗ b)[(i·rb + k, j·cb + l)] = a[(i,j)]·b[(k,l)]`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (rb, cb) = (b.nrows(), b.ncols());
    Mat::from_fn(a.nrows() * rb, a.ncols() * cb, |r, c| a[(r / rb, c / cb)] * b[(r % rb, c % cb)])
}

/// Eigendecomposition of a Hermitian matrix (lower triangle is read), with
/// eigenvalues in descending order.
pub fn hermitian_eig(h: &CMat) -> Result<(Vec<f64>, CMat)> {
    let n = h.nrows();
    if n != h.ncols() {
        return Err(StpcaError::Shape(format!("eigendecomposition of {}x{} matrix", n, h.ncols())));
    }
    if !all_finite(h) {
        return Err(StpcaError::Numerical("non-finite entries in Hermitian eigendecomposition".into()));
    }
    if n == 0 {
        return Ok((Vec::new(), zeros(0, 0)));
    }
    let fail = |_| StpcaError::Numerical("Hermitian eigendecomposition did not converge".into());
    let (vals, vecs) = if is_real(h) {
        let e = real_part(h).self_adjoint_eigen(Side::Lower).map_err(fail)?;
        let vals: Vec<f64> = (0..n).map(|i| e.S().column_vector()[i]).collect();
        (vals, embed(&e.U().to_owned()))
    } else {
        let e = h.self_adjoint_eigen(Side::Lower).map_err(fail)?;
        let vals: Vec<f64> = (0..n).map(|i| e.S().column_vector()[i].re).collect();
        (vals, e.U().to_owned())
    };
    // faer returns ascending order.
    let vals_desc: Vec<f64> = vals.iter().rev().copied().collect();
    let vecs_desc = Mat::from_fn(n, n, |i, j| vecs[(i, n - 1 - j)]);
    Ok((vals_desc, vecs_desc))
}

fn check_solution(x: &CMat, what: &str) -> Result<()> {
    if all_finite(x) {
        Ok(())
    } else {
        Err(StpcaError::Numerical(format!("{what} produced non-finite values")))
    }
}

/// Solves `x * a = b` for `x` by LU with partial pivoting.
pub fn solve_right(b: &CMat, a: &CMat) -> Result<CMat> {
    if a.nrows() != a.ncols() || b.ncols() != a.nrows() {
        return Err(StpcaError::Mismatch(format!(
            "right solve with {}x{} system and {}x{} right-hand side",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    if !all_finite(a) || !all_finite(b) {
        return Err(StpcaError::Numerical("non-finite entries in linear solve".into()));
    }
    let x = if is_real(a) && is_real(b) {
        embed(&real_part(a).partial_piv_lu().rsolve(real_part(b)))
    } else {
        a.partial_piv_lu().rsolve(b)
    };
    check_solution(&x, "right solve")?;
    Ok(x)
}

/// Whether a Hermitian matrix (lower triangle read) admits a Cholesky factor.
pub fn is_positive_definite(h: &CMat) -> bool {
    if is_real(h) {
        real_part(h).llt(Side::Lower).is_ok()
    } else {
        h.llt(Side::Lower).is_ok()
    }
}

/// Solves `a * x = b` for `x` by LU with partial pivoting.
pub fn solve_left(a: &CMat, b: &CMat) -> Result<CMat> {
    if a.nrows() != a.ncols() || b.nrows() != a.ncols() {
        return Err(StpcaError::Mismatch(format!(
            "solve with {}x{} system and {}x{} right-hand side",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    if !all_finite(a) || !all_finite(b) {
        return Err(StpcaError::Numerical("non-finite entries in linear solve".into()));
    }
    let x = if is_real(a) && is_real(b) {
        embed(&real_part(a).partial_piv_lu().solve(real_part(b)))
    } else {
        a.partial_piv_lu().solve(b)
    };
    check_solution(&x, "solve")?;
    Ok(x)
}

pub fn inverse(a: &CMat) -> Result<CMat> {
    solve_left(a, &identity(a.nrows()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, seed: u64) -> CMat {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        Mat::from_fn(n, n, |_, _| cplx(next(), next()))
    }

    #[test]
    fn eig_reconstructs_and_is_descending() {
        let g = sample(6, 3);
        let h = mul_adj(&g, &g);
        let (vals, vecs) = hermitian_eig(&h).unwrap();
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        let lam = diag(&vals);
        let rec = mul_adj(&mul(&vecs, &lam), &vecs);
        assert!(dist(&rec, &h) <= 1e-9 * frob(&h));
        let gram = adj_mul(&vecs, &vecs);
        assert!(dist(&gram, &identity(6)) <= 1e-9 * (6f64).sqrt());
    }

    #[test]
    fn real_path_matches_complex_path() {
        let g = from_real(5, 5, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let h = mul_adj(&g, &g);
        let (vals, _) = hermitian_eig(&h).unwrap();
        let mut hc = h.clone();
        hc[(0, 0)].im = 0.0;
        let e = hc.self_adjoint_eigenvalues(Side::Lower).unwrap();
        for (a, b) in vals.iter().zip(e.iter().rev()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn right_solve_inverts() {
        let mut a = sample(4, 9);
        add_diag(&mut a, 3.0);
        let b = sample(4, 11);
        let x = solve_right(&b, &a).unwrap();
        assert!(dist(&mul(&x, &a), &b) < 1e-12);
        let y = solve_left(&a, &b).unwrap();
        assert!(dist(&mul(&a, &y), &b) < 1e-12);
    }

    #[test]
    fn kron_layout() {
        let a = from_real(2, 2, |i, j| (i * 2 + j + 1) as f64);
        let b = identity(2);
        let k = kron(&a, &b);
        assert_eq!(k[(0, 0)].re, 1.0);
        assert_eq!(k[(1, 1)].re, 1.0);
        assert_eq!(k[(0, 2)].re, 2.0);
        assert_eq!(k[(2, 0)].re, 3.0);
        assert_eq!(k[(3, 3)].re, 4.0);
    }

    #[test]
    fn trace_product_matches_explicit() {
        let a = sample(3, 1);
        let b = sample(3, 2);
        assert!((re_trace_mul(&a, &b) - trace(&mul(&a, &b)).re).abs() < 1e-12);
    }
}
