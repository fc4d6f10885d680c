use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use qhdef::charts::gram_rank_matrix;
use qhdef::defspace::{mul, phi, ChartPoint};
use qhdef::liegroup::{AlgebraVector, GroupModel};

fn models() -> impl Strategy<Value = GroupModel> {
    prop_oneof![
        Just(GroupModel::su2()),
        Just(GroupModel::so3()),
        Just(GroupModel::t2()),
        Just(GroupModel::sl2r()),
    ]
}

fn coords(dim: usize, scale: f64) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-scale..scale, dim).prop_map(DVector::from_vec)
}

fn model_and<const N: usize>(scale: f64) -> impl Strategy<Value = (GroupModel, [DVector<f64>; N])> {
    models().prop_flat_map(move |m| {
        let d = m.dim();
        let vs = prop::array::uniform::<_, N>(coords(d, scale));
        (Just(m), vs)
    })
}

fn bracket(x: &AlgebraVector, y: &AlgebraVector) -> AlgebraVector {
    AlgebraVector::new(&x.mat * &y.mat - &y.mat * &x.mat)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exp_log_roundtrip((m, [x]) in model_and::<1>(0.35)) {
        let back = m.log_coords(&m.exp_coords(&x).unwrap()).unwrap();
        prop_assert!((back - &x).amax() < 1e-10);
    }

    #[test]
    fn adjoint_preserves_brackets((m, [g, x, y]) in model_and::<3>(1.0)) {
        let g = m.exp_coords(&g).unwrap();
        let (x, y) = (m.from_coords(&x), m.from_coords(&y));
        let lhs = m.adjoint(&g, &bracket(&x, &y));
        let rhs = bracket(&m.adjoint(&g, &x), &m.adjoint(&g, &y));
        prop_assert!((lhs.mat - rhs.mat).norm() < 1e-10);
    }

    #[test]
    fn pairing_is_adjoint_invariant((m, [g, x, y]) in model_and::<3>(1.0)) {
        let g = m.exp_coords(&g).unwrap();
        let (x, y) = (m.from_coords(&x), m.from_coords(&y));
        let moved = m.pair(&m.adjoint(&g, &x), &m.adjoint(&g, &y));
        prop_assert!((moved - m.pair(&x, &y)).abs() < 1e-10);
    }

    #[test]
    fn fiber_product_is_associative((m, [a, b, c]) in model_and::<3>(1.0), t in prop_oneof![Just(0.0), 0.05..1.0f64]) {
        let p = |v: &DVector<f64>| phi(&m, &ChartPoint::new(m.from_coords(v), t)).unwrap();
        let (a, b, c) = (p(&a), p(&b), p(&c));
        let left = mul(&mul(&a, &b).unwrap(), &c).unwrap();
        let right = mul(&a, &mul(&b, &c).unwrap()).unwrap();
        prop_assert!(left.distance(&right).unwrap() < 1e-10);
    }

    #[test]
    fn gram_rank_ignores_overall_scale(entries in prop::collection::vec(-1.0..1.0f64, 12), scale in 1e-6..1e6f64) {
        let a = DMatrix::from_vec(4, 3, entries);
        let m = &a * a.transpose();
        let (r1, _) = gram_rank_matrix(&m, 1e-8);
        let (r2, _) = gram_rank_matrix(&(&m * scale), 1e-8);
        prop_assert_eq!(r1, r2);
    }
}
