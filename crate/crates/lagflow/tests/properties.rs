//! Property tests over randomized states and gains.

use nalgebra::{dvector, DMatrix, DVector};
use proptest::prelude::*;

use lagflow::flows::{fl_rhs, FlowSpec};
use lagflow::geometry;
use lagflow::problem::builtin;

fn in_box() -> impl Strategy<Value = DVector<f64>> {
    // The illustrative evaluation box.
    (-3.0..3.0f64, -2.5..2.5f64).prop_map(|(a, b)| dvector![a, b])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projector_is_an_orthogonal_projector(x in in_box()) {
        let p = builtin("illustrative_2d").unwrap();
        let proj = geometry::projector(&p, &x).unwrap();
        let j = p.jac_h(&x);
        prop_assert!((&proj * &proj - &proj).amax() <= 1e-10);
        prop_assert!((&proj - proj.transpose()).amax() <= 1e-10);
        prop_assert!((&proj * j.transpose()).amax() <= 1e-10);
        prop_assert!((proj.trace() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn tangent_basis_is_orthonormal_and_spans_the_projector(x in in_box()) {
        let p = builtin("illustrative_2d").unwrap();
        let basis = geometry::tangent_basis(&p, &x, None).unwrap();
        let q = &basis.q;
        let j = p.jac_h(&x);
        prop_assert!((q.transpose() * q - DMatrix::identity(1, 1)).amax() <= 1e-10);
        prop_assert!((j * q).amax() <= 1e-10);
        let proj = geometry::projector(&p, &x).unwrap();
        prop_assert!((q * q.transpose() - proj).amax() <= 1e-9);
    }

    #[test]
    fn fl_output_identity(x in in_box(), k in 0.1..20.0f64) {
        // The defining property of the linearizing multiplier:
        // J(x)·ẋ = −k·h(x) at every state, not just near the manifold.
        let p = builtin("illustrative_2d").unwrap();
        let dx = fl_rhs(&p, &x, k).unwrap();
        let lhs = (p.jac_h(&x) * dx)[0];
        let rhs = -k * p.h(&x)[0];
        let scale = lhs.abs().max(rhs.abs()).max(1.0);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * scale);
    }

    #[test]
    fn alm_is_bitwise_pi(x in in_box(), z in -5.0..5.0f64, w in 0.1..200.0f64) {
        let p = builtin("illustrative_2d").unwrap();
        let alm = FlowSpec::Alm { w }.dynamics().unwrap();
        let pi = FlowSpec::Pi { k_p: w, k_i: 1.0 }.dynamics().unwrap();
        let zv = dvector![z];
        let (ax, az) = alm.rhs(&p, &x, &zv).unwrap();
        let (px, pz) = pi.rhs(&p, &x, &zv).unwrap();
        prop_assert_eq!(ax, px);
        prop_assert_eq!(az, pz);
    }

    #[test]
    fn zero_multiplier_stationarity_is_gradient_norm(x in in_box()) {
        let p = builtin("illustrative_2d").unwrap();
        let (stat, feas) = p.kkt_residual(&x, &DVector::zeros(1)).unwrap();
        prop_assert!((stat - p.grad_f(&x).norm()).abs() <= 1e-12 * (1.0 + stat));
        prop_assert!((feas - p.h(&x).norm()).abs() <= 1e-15 * (1.0 + feas));
    }

    #[test]
    fn multiplier_map_minimizes_stationarity(x in in_box(), lam in -20.0..20.0f64) {
        // φ(x) is the least-squares multiplier: no other λ gives a smaller
        // stationarity residual.
        let p = builtin("illustrative_2d").unwrap();
        let phi = geometry::multiplier_ls(&p, &x).unwrap();
        let (best, _) = p.kkt_residual(&x, &phi).unwrap();
        let (other, _) = p.kkt_residual(&x, &dvector![lam]).unwrap();
        prop_assert!(best <= other + 1e-9);
    }
}
