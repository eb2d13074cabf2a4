use proptest::prelude::*;
use stpca::linalg::{self, c64, cplx, CMat};
use stpca::tensor::{self, DenseTensor, DirectionSet, Operand, OrderSet, TransformMatrix};

fn shape_strategy(max_order: usize, max_extent: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1..=max_extent, 1..=max_order)
}

fn tensor_of(shape: Vec<usize>, seed: u64) -> DenseTensor {
    let mut r = stpca::rng::rng(seed);
    DenseTensor::from_fn(shape, |_| stpca::rng::complex_normal(&mut r)).unwrap()
}

fn subsets(order: usize) -> Vec<DirectionSet> {
    (1..(1u32 << order))
        .map(|mask| DirectionSet::new((1..=order).filter(|k| mask & (1 << (k - 1)) != 0).collect()).unwrap())
        .collect()
}

/// Row and column of element `idx` from the definition: the `L` modes
/// enumerate rows and the rest enumerate columns, first mode fastest.
fn brute_position(shape: &[usize], idx: &[usize], l: &DirectionSet) -> (usize, usize) {
    let (mut row, mut col, mut rs, mut cs) = (0, 0, 1, 1);
    for k in 0..shape.len() {
        if l.contains(k + 1) {
            row += idx[k] * rs;
            rs *= shape[k];
        } else {
            col += idx[k] * cs;
            cs *= shape[k];
        }
    }
    (row, col)
}

fn multi_indices(shape: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &d in shape {
        out = out.into_iter().flat_map(|p| (0..d).map(move |i| [p.clone(), vec![i]].concat())).collect();
    }
    out
}

#[test]
fn unfold_matches_index_oracle_for_all_small_shapes() {
    let mut checked = 0;
    for order in 1..=4 {
        let shapes = multi_indices(&vec![4; order]);
        for s in shapes {
            let shape: Vec<usize> = s.iter().map(|x| x + 1).collect();
            let t = tensor_of(shape.clone(), checked as u64);
            for l in subsets(order) {
                let m = tensor::unfold(&t, &l).unwrap();
                for idx in multi_indices(&shape) {
                    let (r, c) = brute_position(&shape, &idx, &l);
                    assert_eq!(m[(r, c)], t.get(&idx), "shape {:?} modes {:?} index {:?}", shape, l.modes(), idx);
                }
                let back = tensor::fold(&m, &l, &shape).unwrap();
                assert_eq!(back, t);
                checked += 1;
            }
        }
    }
    assert!(checked > 4000);
}

proptest! {
    #[test]
    fn fold_unfold_round_trip_is_bit_exact(shape in shape_strategy(4, 5), seed in any::<u64>(), mask in 1u32..16) {
        let order = shape.len();
        let modes: Vec<usize> = (1..=order).filter(|k| mask & (1 << (k - 1)) != 0).collect();
        prop_assume!(!modes.is_empty());
        let l = DirectionSet::new(modes).unwrap();
        let t = tensor_of(shape.clone(), seed);
        let m = tensor::unfold(&t, &l).unwrap();
        let back = tensor::fold(&m, &l, &shape).unwrap();
        prop_assert_eq!(back.data(), t.data());
        prop_assert_eq!(tensor::unfold(&back, &l).unwrap(), m);
    }

    #[test]
    fn permutation_inverse_restores_tensor(d in prop::array::uniform3(1usize..5), seed in any::<u64>(), dir2 in any::<bool>()) {
        let t = tensor_of(d.to_vec(), seed);
        let o = if dir2 { OrderSet::DIR2 } else { OrderSet::DIR1 };
        let r = tensor::rotate(&t, o).unwrap();
        for k in 0..3 {
            prop_assert_eq!(r.shape()[k], d[o.perm()[k] - 1]);
        }
        prop_assert_eq!(tensor::unrotate(&r, o).unwrap(), t);
    }

    #[test]
    fn norm_is_permutation_invariant(shape in shape_strategy(4, 4), seed in any::<u64>()) {
        let t = tensor_of(shape.clone(), seed);
        let perm: Vec<usize> = (1..=shape.len()).rev().collect();
        let p = tensor::permute(&t, &perm).unwrap();
        prop_assert!((p.norm_sq() - t.norm_sq()).abs() <= 1e-12 * t.norm_sq().max(1.0));
    }

    #[test]
    fn star_identity_and_adjoint_laws(n1 in 1usize..4, n2 in 1usize..4, p in 1usize..5, seed in any::<u64>(), dft in any::<bool>()) {
        let m = if dft { TransformMatrix::dft(p) } else { TransformMatrix::identity(p) };
        let a = tensor_of(vec![n1, n2, p], seed);
        let b = tensor_of(vec![n2, n1, p], seed ^ 1);
        let ai = tensor::star_m(Operand::Dense(&a), Operand::Identity, &m).unwrap();
        prop_assert!(ai.max_abs_diff(&a) <= 1e-12);
        let ia = tensor::star_m(Operand::Identity, Operand::Dense(&a), &m).unwrap();
        prop_assert!(ia.max_abs_diff(&a) <= 1e-12);
        let ah = tensor::t_adjoint(&a, &m).unwrap();
        let ahh = tensor::t_adjoint(&ah, &m).unwrap();
        prop_assert!(ahh.max_abs_diff(&a) <= 1e-12);
        // (A ⋆ B)^H = B^H ⋆ A^H
        let ab = tensor::star_m(Operand::Dense(&a), Operand::Dense(&b), &m).unwrap();
        let lhs = tensor::t_adjoint(&ab, &m).unwrap();
        let bh = tensor::t_adjoint(&b, &m).unwrap();
        let rhs = tensor::star_m(Operand::Dense(&bh), Operand::Dense(&ah), &m).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-12 * ab.max_abs().max(1.0));
    }

    #[test]
    fn dense_identity_tensor_matches_implicit(n in 1usize..4, p in 1usize..5, seed in any::<u64>()) {
        let m = TransformMatrix::dft(p);
        // Identity tensor: identity slice in the transform domain.
        let hat = DenseTensor::from_frontal_slices(&vec![linalg::identity(n); p]).unwrap();
        let id = m.apply_inverse(&hat).unwrap();
        let a = tensor_of(vec![n, n, p], seed);
        let dense = tensor::star_m(Operand::Dense(&a), Operand::Dense(&id), &m).unwrap();
        prop_assert!(dense.max_abs_diff(&a) <= 1e-12);
    }

    #[test]
    fn dft_star_is_circular_t_product(n in 1usize..3, p in 1usize..5, seed in any::<u64>()) {
        let a = tensor_of(vec![n, n, p], seed);
        let b = tensor_of(vec![n, n, p], seed ^ 7);
        let c = tensor::star_m(Operand::Dense(&a), Operand::Dense(&b), &TransformMatrix::dft(p)).unwrap();
        // Block-circulant definition in the spatial domain.
        for k in 0..p {
            for i in 0..n {
                for j in 0..n {
                    let mut s = cplx(0.0, 0.0);
                    for q in 0..p {
                        for l in 0..n {
                            s += a.get(&[i, l, (k + p - q) % p]) * b.get(&[l, j, q]);
                        }
                    }
                    prop_assert!((c.get(&[i, j, k]) - s).norm() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn apply_along_single_mode_is_mode_product(d in prop::array::uniform3(1usize..4), seed in any::<u64>(), mode in 1usize..=3) {
        let t = tensor_of(d.to_vec(), seed);
        let b = d[mode - 1];
        let mut r = stpca::rng::rng(seed ^ 3);
        let a: CMat = faer::Mat::from_fn(b, b, |_, _| stpca::rng::complex_normal(&mut r));
        let out = tensor::apply_along(&t, &a, &DirectionSet::single(mode).unwrap()).unwrap();
        for idx in multi_indices(&d) {
            let mut s: c64 = cplx(0.0, 0.0);
            for q in 0..b {
                let mut j = idx.clone();
                j[mode - 1] = q;
                s += a[(idx[mode - 1], q)] * t.get(&j);
            }
            prop_assert!((out.get(&idx) - s).norm() <= 1e-12 * (1.0 + s.norm()));
        }
    }

    #[test]
    fn centralized_tensor_has_zero_sample_means(d in (1usize..5, 1usize..5, 2usize..6), seed in any::<u64>()) {
        let d = [d.0, d.1, d.2];
        let t = tensor_of(d.to_vec(), seed);
        let c = tensor::centralize(&t, 3).unwrap();
        for i in 0..d[0] {
            for j in 0..d[1] {
                let s: c64 = (0..d[2]).map(|k| c.get(&[i, j, k])).sum();
                prop_assert!(s.norm() <= 1e-12 * d[2] as f64 * t.max_abs().max(1.0));
            }
        }
    }
}

#[test]
fn centralize_rejects_single_sample() {
    assert!(tensor::centralize(&tensor_of(vec![2, 3, 1], 0), 3).is_err());
}
