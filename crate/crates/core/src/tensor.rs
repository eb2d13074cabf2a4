//! Dense complex tensors, direction unfolding and the `⋆_M` product.
//!
//! Storage is first-mode-fastest: the element at 0-based multi-index
//! `(i_1, ..., i_n)` lives at `i_1 + d_1·(i_2 + d_2·(i_3 + ...))`. With this
//! layout the unfolding along `{1}` is a reinterpretation of the buffer as a
//! column-major `d_1 × (d_2···d_n)` matrix.

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Result, StpcaError};
use crate::linalg::{self, c64, cplx, CMat};

/// Highest tensor order accepted by the unfolding products.
pub const MAX_UNFOLD_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<c64>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(StpcaError::Shape("tensor order must be at least 1".into()));
    }
    if let Some(k) = shape.iter().position(|&d| d == 0) {
        return Err(StpcaError::Shape(format!("extent of mode {} is zero", k + 1)));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| StpcaError::Shape("element count overflows".into()))
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<c64>) -> Result<Self> {
        let n = check_shape(&shape)?;
        if n != data.len() {
            return Err(StpcaError::Shape(format!(
                "shape {:?} needs {} scalars, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let n = check_shape(&shape)?;
        Ok(Self { shape, data: vec![cplx(0.0, 0.0); n] })
    }

    pub fn from_real(shape: Vec<usize>, data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&x| cplx(x, 0.0)).collect())
    }

    /// Builds a tensor from a function of the 0-based multi-index.
    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> c64) -> Result<Self> {
        let n = check_shape(&shape)?;
        let mut data = Vec::with_capacity(n);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..n {
            data.push(f(&idx));
            increment(&mut idx, &shape);
        }
        Ok(Self { shape, data })
    }

    /// Stacks equally sized matrices as frontal slices of a third-order tensor.
    pub fn from_frontal_slices(slices: &[CMat]) -> Result<Self> {
        let first = slices.first().ok_or_else(|| StpcaError::Shape("no slices".into()))?;
        let (r, c) = (first.nrows(), first.ncols());
        let mut data = Vec::with_capacity(r * c * slices.len());
        for (k, s) in slices.iter().enumerate() {
            if s.nrows() != r || s.ncols() != c {
                return Err(StpcaError::Mismatch(format!(
                    "slice {} is {}x{}, expected {}x{}",
                    k,
                    s.nrows(),
                    s.ncols(),
                    r,
                    c
                )));
            }
            for j in 0..c {
                for i in 0..r {
                    data.push(s[(i, j)]);
                }
            }
        }
        Self::new(vec![r, c, slices.len()], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[c64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<c64> {
        self.data
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut lin = 0;
        for k in (0..idx.len()).rev() {
            debug_assert!(idx[k] < self.shape[k]);
            lin = lin * self.shape[k] + idx[k];
        }
        lin
    }

    /// Element at a 0-based multi-index.
    pub fn get(&self, idx: &[usize]) -> c64 {
        self.data[self.linear_index(idx)]
    }

    pub fn is_real(&self) -> bool {
        self.data.iter().all(|z| z.im == 0.0)
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn max_abs_diff(&self, other: &DenseTensor) -> f64 {
        assert_eq!(self.shape, other.shape, "shapes differ");
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).norm()))
    }

    pub fn map(&self, f: impl Fn(c64) -> c64) -> DenseTensor {
        DenseTensor { shape: self.shape.clone(), data: self.data.iter().map(|&z| f(z)).collect() }
    }

    pub fn scale(&self, s: f64) -> DenseTensor {
        self.map(|z| z * s)
    }

    pub fn sub(&self, other: &DenseTensor) -> Result<DenseTensor> {
        if self.shape != other.shape {
            return Err(StpcaError::Mismatch(format!("{:?} vs {:?}", self.shape, other.shape)));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(DenseTensor { shape: self.shape.clone(), data })
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<DenseTensor> {
        DenseTensor::new(shape, self.data)
    }

    /// Mode-1 unfolding as a borrowed column-major view (no copy).
    pub fn mode1_view(&self) -> MatRef<'_, c64> {
        let rows = self.shape[0];
        MatRef::from_column_major_slice(&self.data, rows, self.data.len() / rows)
    }

    /// Frontal slice `k` (0-based) of a third-order tensor.
    pub fn frontal_slice(&self, k: usize) -> CMat {
        assert_eq!(self.order(), 3, "frontal slices need a third-order tensor");
        let (r, c) = (self.shape[0], self.shape[1]);
        let base = k * r * c;
        Mat::from_fn(r, c, |i, j| self.data[base + i + r * j])
    }

    /// Indices `start..end` of the last mode as a new tensor.
    pub fn last_mode_range(&self, start: usize, end: usize) -> Result<DenseTensor> {
        let last = *self.shape.last().ok_or_else(|| StpcaError::Shape("empty shape".into()))?;
        if start >= end || end > last {
            return Err(StpcaError::Shape(format!("range {}..{} of extent {}", start, end, last)));
        }
        let step = self.len() / last;
        let mut shape = self.shape.clone();
        *shape.last_mut().unwrap() = end - start;
        DenseTensor::new(shape, self.data[start * step..end * step].to_vec())
    }

    pub fn frontal_slices(&self) -> Vec<CMat> {
        (0..self.shape[2]).map(|k| self.frontal_slice(k)).collect()
    }
}

fn increment(idx: &mut [usize], shape: &[usize]) {
    for k in 0..idx.len() {
        idx[k] += 1;
        if idx[k] < shape[k] {
            return;
        }
        idx[k] = 0;
    }
}

/// Row-mode set `L` of a direction unfolding (1-based, strictly increasing).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct DirectionSet {
    modes: Vec<usize>,
}

impl DirectionSet {
    pub fn new(modes: Vec<usize>) -> Result<Self> {
        if modes.is_empty() {
            return Err(StpcaError::Direction("direction set is empty".into()));
        }
        if modes[0] == 0 {
            return Err(StpcaError::Direction("mode indices are 1-based".into()));
        }
        for w in modes.windows(2) {
            if w[0] == w[1] {
                return Err(StpcaError::Direction(format!("duplicate mode {}", w[0])));
            }
            if w[0] > w[1] {
                return Err(StpcaError::Direction(format!("modes {:?} are not increasing", modes)));
            }
        }
        Ok(Self { modes })
    }

    pub fn single(mode: usize) -> Result<Self> {
        Self::new(vec![mode])
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn contains(&self, mode: usize) -> bool {
        self.modes.contains(&mode)
    }

    pub fn check_order(&self, order: usize) -> Result<()> {
        match self.modes.last() {
            Some(&m) if m > order => {
                Err(StpcaError::Direction(format!("mode {} out of range for order {}", m, order)))
            }
            _ => Ok(()),
        }
    }

    /// Modes not in the set, increasing.
    pub fn complement(&self, order: usize) -> Vec<usize> {
        (1..=order).filter(|m| !self.contains(*m)).collect()
    }

    pub fn is_disjoint(&self, other: &DirectionSet) -> bool {
        self.modes.iter().all(|m| !other.contains(*m))
    }

    /// Product of the extents of the set's modes.
    pub fn extent(&self, shape: &[usize]) -> usize {
        self.modes.iter().map(|&m| shape[m - 1]).product()
    }
}

impl TryFrom<Vec<usize>> for DirectionSet {
    type Error = StpcaError;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        DirectionSet::new(v)
    }
}

impl From<DirectionSet> for Vec<usize> {
    fn from(d: DirectionSet) -> Self {
        d.modes
    }
}

/// Per-mode placement of an unfolding: `(is_row, stride)`.
fn unfold_layout(shape: &[usize], l: &DirectionSet) -> (Vec<(bool, usize)>, usize, usize) {
    let mut layout = vec![(false, 0usize); shape.len()];
    let (mut rs, mut cs) = (1usize, 1usize);
    for (k, &d) in shape.iter().enumerate() {
        if l.contains(k + 1) {
            layout[k] = (true, rs);
            rs *= d;
        } else {
            layout[k] = (false, cs);
            cs *= d;
        }
    }
    (layout, rs, cs)
}

fn check_unfold(order: usize, l: &DirectionSet) -> Result<()> {
    if order > MAX_UNFOLD_ORDER {
        return Err(StpcaError::Shape(format!(
            "unfolding products support order up to {}, got {}",
            MAX_UNFOLD_ORDER, order
        )));
    }
    l.check_order(order)
}

/// Visits every element in storage order with its (row, col) under the unfolding.
fn for_each_position(shape: &[usize], l: &DirectionSet, mut f: impl FnMut(usize, usize, usize)) {
    let (layout, _, _) = unfold_layout(shape, l);
    let n: usize = shape.iter().product();
    let mut idx = vec![0usize; shape.len()];
    let (mut row, mut col) = (0usize, 0usize);
    for lin in 0..n {
        f(lin, row, col);
        for k in 0..idx.len() {
            let (is_row, stride) = layout[k];
            idx[k] += 1;
            if idx[k] < shape[k] {
                if is_row {
                    row += stride;
                } else {
                    col += stride;
                }
                break;
            }
            let back = (shape[k] - 1) * stride;
            if is_row {
                row -= back;
            } else {
                col -= back;
            }
            idx[k] = 0;
        }
    }
}

/// Direction unfolding: rows enumerate the modes in `l` (first fastest), columns
/// the remaining modes (first fastest).
pub fn unfold(t: &DenseTensor, l: &DirectionSet) -> Result<CMat> {
    check_unfold(t.order(), l)?;
    let (_, rows, cols) = unfold_layout(&t.shape, l);
    if l.modes() == [1] {
        return Ok(t.mode1_view().to_owned());
    }
    let mut m = Mat::zeros(rows, cols);
    for_each_position(&t.shape, l, |lin, r, c| m[(r, c)] = t.data[lin]);
    Ok(m)
}

/// Inverse of [`unfold`].
pub fn fold(m: &CMat, l: &DirectionSet, shape: &[usize]) -> Result<DenseTensor> {
    let n = check_shape(shape)?;
    check_unfold(shape.len(), l)?;
    let (_, rows, cols) = unfold_layout(shape, l);
    if m.nrows() != rows || m.ncols() != cols {
        return Err(StpcaError::Mismatch(format!(
            "{}x{} matrix cannot fold to {:?} along {:?}",
            m.nrows(),
            m.ncols(),
            shape,
            l.modes()
        )));
    }
    let mut data = vec![cplx(0.0, 0.0); n];
    for_each_position(shape, l, |lin, r, c| data[lin] = m[(r, c)]);
    DenseTensor::new(shape.to_vec(), data)
}

/// Shape of a tensor whose `l`-modes have been contracted to a single `m`.
fn inner_shape(shape: &[usize], l: &DirectionSet, m: usize) -> Vec<usize> {
    let mut out = shape.to_vec();
    for (q, &mode) in l.modes().iter().enumerate() {
        out[mode - 1] = if q == 0 { m } else { 1 };
    }
    out
}

/// Direction-unfolding inner product `fold(U_(1) · T_L)`. The first mode of `l` takes
/// extent `m = u.shape[0]`, the other modes of `l` take extent 1.
pub fn dir_inner(t: &DenseTensor, u: &DenseTensor, l: &DirectionSet) -> Result<DenseTensor> {
    check_unfold(t.order(), l)?;
    if u.order() != l.len() + 1 {
        return Err(StpcaError::Mismatch(format!(
            "factor of order {} used with {} direction modes",
            u.order(),
            l.len()
        )));
    }
    for (q, &mode) in l.modes().iter().enumerate() {
        if u.shape[q + 1] != t.shape[mode - 1] {
            return Err(StpcaError::Mismatch(format!(
                "factor extent {} differs from tensor extent {} on mode {}",
                u.shape[q + 1],
                t.shape[mode - 1],
                mode
            )));
        }
    }
    let u1 = u.mode1_view().to_owned();
    let v = linalg::mul(&u1, &unfold(t, l)?);
    fold(&v, l, &inner_shape(&t.shape, l, u.shape[0]))
}

/// Direction-unfolding outer product `fold(U_(1)^H · V_L)`, restoring the
/// `l`-extents from `u.shape[1..]`.
pub fn dir_outer(v: &DenseTensor, u: &DenseTensor, l: &DirectionSet) -> Result<DenseTensor> {
    check_unfold(v.order(), l)?;
    if u.order() != l.len() + 1 {
        return Err(StpcaError::Mismatch(format!(
            "factor of order {} used with {} direction modes",
            u.order(),
            l.len()
        )));
    }
    let vl = unfold(v, l)?;
    if vl.nrows() != u.shape[0] {
        return Err(StpcaError::Mismatch(format!(
            "direction extent {} differs from factor rows {}",
            vl.nrows(),
            u.shape[0]
        )));
    }
    let u1 = u.mode1_view().to_owned();
    let out = linalg::adj_mul(&u1, &vl);
    let mut shape = v.shape.clone();
    for (q, &mode) in l.modes().iter().enumerate() {
        shape[mode - 1] = u.shape[q + 1];
    }
    fold(&out, l, &shape)
}

/// `fold(A · T_L)` for a square `A` of side `∏_{k∈L} d_k`; the shape is unchanged.
pub fn apply_along(t: &DenseTensor, a: &CMat, l: &DirectionSet) -> Result<DenseTensor> {
    let b = l.extent(&t.shape);
    if a.nrows() != b || a.ncols() != b {
        return Err(StpcaError::Mismatch(format!(
            "{}x{} matrix applied along modes {:?} of extent {}",
            a.nrows(),
            a.ncols(),
            l.modes(),
            b
        )));
    }
    fold(&linalg::mul(a, &unfold(t, l)?), l, &t.shape)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    Identity,
    Dft,
    Custom,
}

/// Invertible mode-3 transform `M` with its cached inverse.
#[derive(Debug, Clone)]
pub struct TransformMatrix {
    kind: TransformKind,
    side: usize,
    matrix: Option<CMat>,
    inverse: Option<CMat>,
}

impl TransformMatrix {
    pub fn identity(p: usize) -> Self {
        Self { kind: TransformKind::Identity, side: p, matrix: None, inverse: None }
    }

    /// Unnormalized DFT, `M_jk = exp(-2πi·jk/p)`; the inverse carries `1/p`.
    pub fn dft(p: usize) -> Self {
        let w = |j: usize, k: usize, sign: f64| {
            let ang = sign * 2.0 * std::f64::consts::PI * ((j * k) % p) as f64 / p as f64;
            cplx(ang.cos(), ang.sin())
        };
        let m = Mat::from_fn(p, p, |j, k| w(j, k, -1.0));
        let inv = Mat::from_fn(p, p, |j, k| w(j, k, 1.0) / p as f64);
        Self { kind: TransformKind::Dft, side: p, matrix: Some(m), inverse: Some(inv) }
    }

    pub fn custom(m: CMat) -> Result<Self> {
        let p = m.nrows();
        if p == 0 || m.ncols() != p {
            return Err(StpcaError::Shape(format!("transform must be square, got {}x{}", p, m.ncols())));
        }
        let inv = linalg::inverse(&m).map_err(|_| StpcaError::Singular("transform matrix".into()))?;
        let resid = linalg::dist(&linalg::mul(&m, &inv), &linalg::identity(p));
        if !(resid <= 1e-10 * p as f64) {
            return Err(StpcaError::Singular(format!("transform inverse residual {:.3e}", resid)));
        }
        Ok(Self { kind: TransformKind::Custom, side: p, matrix: Some(m), inverse: Some(inv) })
    }

    pub fn from_kind(kind: TransformKind, p: usize) -> Result<Self> {
        match kind {
            TransformKind::Identity => Ok(Self::identity(p)),
            TransformKind::Dft => Ok(Self::dft(p)),
            TransformKind::Custom => Err(StpcaError::Invalid("custom transform needs a matrix".into())),
        }
    }

    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn matrix(&self) -> CMat {
        self.matrix.clone().unwrap_or_else(|| linalg::identity(self.side))
    }

    pub fn inverse_matrix(&self) -> CMat {
        self.inverse.clone().unwrap_or_else(|| linalg::identity(self.side))
    }

    fn apply_with(&self, t: &DenseTensor, m: Option<&CMat>) -> Result<DenseTensor> {
        if t.order() != 3 {
            return Err(StpcaError::Shape(format!("mode-3 product needs order 3, got {}", t.order())));
        }
        if t.shape[2] != self.side {
            return Err(StpcaError::Mismatch(format!(
                "transform side {} differs from third extent {}",
                self.side, t.shape[2]
            )));
        }
        let Some(m) = m else { return Ok(t.clone()) };
        let rows = t.shape[0] * t.shape[1];
        let tm = MatRef::from_column_major_slice(&t.data, rows, self.side).to_owned();
        let out = linalg::mul(&tm, &m.transpose().to_owned());
        let data = (0..self.side).flat_map(|k| (0..rows).map(move |i| (k, i))).map(|(k, i)| out[(i, k)]).collect();
        DenseTensor::new(t.shape.clone(), data)
    }

    /// `t ×_3 M`.
    pub fn apply(&self, t: &DenseTensor) -> Result<DenseTensor> {
        self.apply_with(t, self.matrix.as_ref())
    }

    /// `t ×_3 M^{-1}`.
    pub fn apply_inverse(&self, t: &DenseTensor) -> Result<DenseTensor> {
        self.apply_with(t, self.inverse.as_ref())
    }
}

/// `Â(:,:,j) = Σ_k M_jk A(:,:,k)`.
pub fn mode3_product(t: &DenseTensor, m: &TransformMatrix) -> Result<DenseTensor> {
    m.apply(t)
}

/// Operand of [`star_m`]; the identity tensor is implicit.
#[derive(Debug, Clone, Copy)]
pub enum Operand<'a> {
    Dense(&'a DenseTensor),
    Identity,
}

impl<'a> From<&'a DenseTensor> for Operand<'a> {
    fn from(t: &'a DenseTensor) -> Self {
        Operand::Dense(t)
    }
}

fn check_side(t: &DenseTensor, m: &TransformMatrix) -> Result<()> {
    if t.order() != 3 {
        return Err(StpcaError::Shape(format!("star product needs order 3, got {}", t.order())));
    }
    if t.shape[2] != m.side() {
        return Err(StpcaError::Mismatch(format!(
            "transform side {} differs from third extent {}",
            m.side(),
            t.shape[2]
        )));
    }
    Ok(())
}

/// `⋆_M` product: frontal-slice products in the transform domain, transformed back.
pub fn star_m(a: Operand<'_>, b: Operand<'_>, m: &TransformMatrix) -> Result<DenseTensor> {
    match (a, b) {
        (Operand::Identity, Operand::Identity) => {
            Err(StpcaError::Invalid("product of two implicit identity tensors has no shape".into()))
        }
        (Operand::Dense(t), Operand::Identity) | (Operand::Identity, Operand::Dense(t)) => {
            check_side(t, m)?;
            Ok(t.clone())
        }
        (Operand::Dense(a), Operand::Dense(b)) => {
            check_side(a, m)?;
            check_side(b, m)?;
            if a.shape[1] != b.shape[0] {
                return Err(StpcaError::Mismatch(format!(
                    "inner dimensions {} and {} differ",
                    a.shape[1], b.shape[0]
                )));
            }
            let (ah, bh) = (m.apply(a)?, m.apply(b)?);
            let slices: Vec<CMat> =
                (0..m.side()).map(|i| linalg::mul(&ah.frontal_slice(i), &bh.frontal_slice(i))).collect();
            m.apply_inverse(&DenseTensor::from_frontal_slices(&slices)?)
        }
    }
}

/// Conjugate transpose under `⋆_M`: each transform-domain slice is replaced by its adjoint.
pub fn t_adjoint(a: &DenseTensor, m: &TransformMatrix) -> Result<DenseTensor> {
    check_side(a, m)?;
    let ah = m.apply(a)?;
    let slices: Vec<CMat> = (0..m.side()).map(|i| linalg::adjoint(&ah.frontal_slice(i))).collect();
    m.apply_inverse(&DenseTensor::from_frontal_slices(&slices)?)
}

/// Axis permutation of a third-order tensor; output mode `k` is input mode `perm[k]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct OrderSet {
    perm: [usize; 3],
}

impl OrderSet {
    /// `{1,3,2}`: samples move to mode 2 and mode-2 slices are fitted.
    pub const DIR1: OrderSet = OrderSet { perm: [1, 3, 2] };
    /// `{2,3,1}`: mode-1 slices are fitted.
    pub const DIR2: OrderSet = OrderSet { perm: [2, 3, 1] };

    pub fn new(perm: [usize; 3]) -> Result<Self> {
        let mut seen = [false; 3];
        for &p in &perm {
            if !(1..=3).contains(&p) || seen[p - 1] {
                return Err(StpcaError::Invalid(format!("{:?} is not a permutation of 1..3", perm)));
            }
            seen[p - 1] = true;
        }
        let o = OrderSet { perm };
        if o != Self::DIR1 && o != Self::DIR2 {
            return Err(StpcaError::Invalid(format!("order set {:?} is not supported", perm)));
        }
        Ok(o)
    }

    pub fn perm(&self) -> [usize; 3] {
        self.perm
    }

    pub fn inverse_perm(&self) -> [usize; 3] {
        let mut inv = [0; 3];
        for (k, &p) in self.perm.iter().enumerate() {
            inv[p - 1] = k + 1;
        }
        inv
    }
}

impl TryFrom<Vec<usize>> for OrderSet {
    type Error = StpcaError;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        let arr: [usize; 3] =
            v.try_into().map_err(|v: Vec<usize>| StpcaError::Invalid(format!("order set of length {}", v.len())))?;
        OrderSet::new(arr)
    }
}

impl From<OrderSet> for Vec<usize> {
    fn from(o: OrderSet) -> Self {
        o.perm.to_vec()
    }
}

/// General axis permutation with 1-based `perm`: output extent `k` is input extent `perm[k]`.
pub fn permute(t: &DenseTensor, perm: &[usize]) -> Result<DenseTensor> {
    let n = t.order();
    let mut seen = vec![false; n];
    if perm.len() != n || perm.iter().any(|&p| p == 0 || p > n || std::mem::replace(&mut seen[p - 1], true)) {
        return Err(StpcaError::Invalid(format!("{:?} is not a permutation of 1..{}", perm, n)));
    }
    let shape: Vec<usize> = perm.iter().map(|&p| t.shape[p - 1]).collect();
    let mut in_stride = vec![1usize; n];
    for k in 1..n {
        in_stride[k] = in_stride[k - 1] * t.shape[k - 1];
    }
    let strides: Vec<usize> = perm.iter().map(|&p| in_stride[p - 1]).collect();
    let mut data = Vec::with_capacity(t.len());
    let mut idx = vec![0usize; n];
    let mut src = 0usize;
    for _ in 0..t.len() {
        data.push(t.data[src]);
        for k in 0..n {
            idx[k] += 1;
            if idx[k] < shape[k] {
                src += strides[k];
                break;
            }
            src -= (shape[k] - 1) * strides[k];
            idx[k] = 0;
        }
    }
    DenseTensor::new(shape, data)
}

pub fn rotate(t: &DenseTensor, d: OrderSet) -> Result<DenseTensor> {
    if t.order() != 3 {
        return Err(StpcaError::Shape(format!("rotation needs order 3, got {}", t.order())));
    }
    permute(t, &d.perm())
}

pub fn unrotate(t: &DenseTensor, d: OrderSet) -> Result<DenseTensor> {
    if t.order() != 3 {
        return Err(StpcaError::Shape(format!("rotation needs order 3, got {}", t.order())));
    }
    permute(t, &d.inverse_perm())
}

/// Subtracts the mean over the sample mode (1-based) from every element.
pub fn centralize(samples: &DenseTensor, sample_mode: usize) -> Result<DenseTensor> {
    if sample_mode == 0 || sample_mode > samples.order() {
        return Err(StpcaError::Invalid(format!(
            "sample mode {} out of range for order {}",
            sample_mode,
            samples.order()
        )));
    }
    let ns = samples.shape[sample_mode - 1];
    if ns < 2 {
        return Err(StpcaError::Invalid(format!("centralization needs at least 2 samples, got {}", ns)));
    }
    let inner: usize = samples.shape[..sample_mode - 1].iter().product();
    let features = samples.len() / ns;
    let key = |lin: usize| lin % inner + inner * (lin / (inner * ns));
    let mut mean = vec![cplx(0.0, 0.0); features];
    for (lin, z) in samples.data.iter().enumerate() {
        mean[key(lin)] += z;
    }
    for m in &mut mean {
        *m /= ns as f64;
    }
    let data = samples.data.iter().enumerate().map(|(lin, z)| z - mean[key(lin)]).collect();
    DenseTensor::new(samples.shape.clone(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> DenseTensor {
        DenseTensor::from_fn(vec![2, 2, 2], |i| {
            cplx((i[0] + 1) as f64 + 10.0 * (i[1] + 1) as f64 + 100.0 * (i[2] + 1) as f64, 0.0)
        })
        .unwrap()
    }

    fn l(m: &[usize]) -> DirectionSet {
        DirectionSet::new(m.to_vec()).unwrap()
    }

    #[test]
    fn unfold_first_mode_row() {
        let m = unfold(&example(), &l(&[1])).unwrap();
        assert_eq!((m.nrows(), m.ncols()), (2, 4));
        let row: Vec<f64> = (0..4).map(|j| m[(0, j)].re).collect();
        assert_eq!(row, vec![111.0, 121.0, 211.0, 221.0]);
    }

    #[test]
    fn unfold_all_modes_is_column() {
        let t = example();
        let m = unfold(&t, &l(&[1, 2, 3])).unwrap();
        assert_eq!((m.nrows(), m.ncols()), (8, 1));
        for i in 0..8 {
            assert_eq!(m[(i, 0)], t.data()[i]);
        }
    }

    #[test]
    fn unfold_matrix_is_itself() {
        let t = DenseTensor::from_fn(vec![2, 3], |i| cplx(i[0] as f64, i[1] as f64)).unwrap();
        let m = unfold(&t, &l(&[1])).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(m[(i, j)], cplx(i as f64, j as f64));
            }
        }
    }

    #[test]
    fn fold_inverts_example() {
        let t = example();
        let m = unfold(&t, &l(&[1])).unwrap();
        assert_eq!(fold(&m, &l(&[1]), &[2, 2, 2]).unwrap(), t);
    }

    #[test]
    fn direction_set_validation() {
        assert!(DirectionSet::new(vec![]).is_err());
        assert!(DirectionSet::new(vec![1, 1]).is_err());
        assert!(DirectionSet::new(vec![2, 1]).is_err());
        assert!(DirectionSet::new(vec![0]).is_err());
        assert!(unfold(&example(), &l(&[4])).is_err());
    }

    #[test]
    fn inner_with_ones_row_sums_columns() {
        let u = DenseTensor::from_real(vec![1, 2], &[1.0, 1.0]).unwrap();
        let v = dir_inner(&example(), &u, &l(&[1])).unwrap();
        assert_eq!(v.shape(), &[1, 2, 2]);
        let got: Vec<f64> = v.data().iter().map(|z| z.re).collect();
        assert_eq!(got, vec![223.0, 243.0, 423.0, 443.0]);
    }

    #[test]
    fn inner_with_identity_is_noop() {
        let t = example();
        let u = DenseTensor::from_fn(vec![2, 2], |i| cplx((i[0] == i[1]) as u8 as f64, 0.0)).unwrap();
        assert_eq!(dir_inner(&t, &u, &l(&[1])).unwrap(), t);
    }

    #[test]
    fn outer_with_unit_row_zeroes_second_row() {
        let t = example();
        let u = DenseTensor::from_real(vec![1, 2], &[1.0, 0.0]).unwrap();
        let r = dir_outer(&dir_inner(&t, &u, &l(&[1])).unwrap(), &u, &l(&[1])).unwrap();
        let m = unfold(&r, &l(&[1])).unwrap();
        let orig = unfold(&t, &l(&[1])).unwrap();
        for j in 0..4 {
            assert_eq!(m[(0, j)], orig[(0, j)]);
            assert_eq!(m[(1, j)], cplx(0.0, 0.0));
        }
    }

    #[test]
    fn dft_of_constant_tube() {
        let t = DenseTensor::from_real(vec![1, 1, 4], &[2.0; 4]).unwrap();
        let out = mode3_product(&t, &TransformMatrix::dft(4)).unwrap();
        assert!((out.data()[0] - cplx(8.0, 0.0)).norm() < 1e-12);
        for z in &out.data()[1..] {
            assert!(z.norm() < 1e-12);
        }
    }

    #[test]
    fn identity_transform_is_noop() {
        let t = example();
        assert_eq!(mode3_product(&t, &TransformMatrix::identity(2)).unwrap(), t);
    }

    #[test]
    fn singular_custom_transform_rejected() {
        let m = linalg::from_real(2, 2, |_, _| 1.0);
        assert!(TransformMatrix::custom(m).is_err());
    }

    #[test]
    fn star_identity_operand() {
        let t = example();
        let m = TransformMatrix::dft(2);
        assert_eq!(star_m(Operand::Dense(&t), Operand::Identity, &m).unwrap(), t);
        assert_eq!(star_m(Operand::Identity, Operand::Dense(&t), &m).unwrap(), t);
        assert!(star_m(Operand::Identity, Operand::Identity, &m).is_err());
    }

    #[test]
    fn rotate_shapes() {
        let t = DenseTensor::zeros(vec![10, 10, 800]).unwrap();
        assert_eq!(rotate(&t, OrderSet::DIR1).unwrap().shape(), &[10, 800, 10]);
        let t = DenseTensor::zeros(vec![2, 3, 4]).unwrap();
        assert_eq!(rotate(&t, OrderSet::DIR2).unwrap().shape(), &[3, 4, 2]);
        assert!(OrderSet::new([1, 2, 3]).is_err());
        assert!(OrderSet::new([1, 1, 3]).is_err());
    }

    #[test]
    fn rotate_moves_elements() {
        let t = DenseTensor::from_fn(vec![2, 3, 4], |i| cplx((i[0] + 10 * i[1] + 100 * i[2]) as f64, 0.0)).unwrap();
        for d in [OrderSet::DIR1, OrderSet::DIR2] {
            let r = rotate(&t, d).unwrap();
            let p = d.perm();
            for a in 0..2 {
                for b in 0..3 {
                    for c in 0..4 {
                        let src = [a, b, c];
                        let dst = [src[p[0] - 1], src[p[1] - 1], src[p[2] - 1]];
                        assert_eq!(r.get(&dst), t.get(&src));
                    }
                }
            }
            assert_eq!(unrotate(&r, d).unwrap(), t);
        }
    }

    #[test]
    fn centralize_cases() {
        let same = DenseTensor::from_fn(vec![2, 2, 2], |i| cplx(i[0] as f64 + 3.0, i[1] as f64)).unwrap();
        assert_eq!(centralize(&same, 3).unwrap().max_abs(), 0.0);
        let pm = DenseTensor::from_fn(vec![2, 2], |i| cplx(if i[1] == 0 { 1.5 } else { -1.5 }, 0.0)).unwrap();
        assert_eq!(centralize(&pm, 2).unwrap(), pm);
        let one = DenseTensor::zeros(vec![2, 2, 1]).unwrap();
        assert!(centralize(&one, 3).is_err());
    }

    #[test]
    fn centralize_middle_mode() {
        let t = DenseTensor::from_fn(vec![2, 3, 2], |i| cplx((i[0] * 7 + i[1] * i[1] + 5 * i[2]) as f64, 0.0)).unwrap();
        let c = centralize(&t, 2).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                let s: c64 = (0..3).map(|k| c.get(&[a, k, b])).sum();
                assert!(s.norm() < 1e-12);
            }
        }
    }
}
