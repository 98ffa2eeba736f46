mod common;

use std::sync::Arc;

use common::*;
use heatflow::lagrangian::{extended_lagrangian, extended_lagrangian_completed_square, grad_xdot, penalty_term};
use heatflow::prelude::*;
use nalgebra::DVector;
use proptest::prelude::*;

fn vec_in(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(lo..hi, n).prop_map(DVector::from_vec)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn unicycle_gradients_match_fd(
        x in vec_in(3, -1.0, 1.0),
        xdot in vec_in(3, -2.0, 2.0),
        mu in vec_in(2, -1.0, 1.0),
        mu_c in vec_in(2, -0.5, 0.5),
        lambda in 1.0f64..100.0,
    ) {
        let ctx = boxed(Arc::new(unicycle_const_vel()), lambda, 1, 0.5);
        gradient_mismatch(&ctx, &x, &xdot, &DualState { mu, mu_c }).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn dynamic_unicycle_gradients_match_fd(
        x in vec_in(5, -1.0, 1.0),
        xdot in vec_in(5, -2.0, 2.0),
        mu in vec_in(3, -1.0, 1.0),
        mu_c in vec_in(2, -0.5, 0.5),
        lambda in 1.0f64..100.0,
    ) {
        let ctx = boxed(Arc::new(dynamic_unicycle()), lambda, 3, 0.5);
        gradient_mismatch(&ctx, &x, &xdot, &DualState { mu, mu_c }).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn diver_gradients_match_fd(
        x in vec_in(6, -1.5, 1.5),
        xdot in vec_in(6, -2.0, 2.0),
        mu in vec_in(4, -1.0, 1.0),
        mu_c in vec_in(2, -0.5, 0.5),
        lambda in 1.0f64..100.0,
    ) {
        let ctx = boxed(diver_unit(), lambda, 2, 1.0);
        gradient_mismatch(&ctx, &x, &xdot, &DualState { mu, mu_c }).map_err(TestCaseError::fail)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// The coupled and completed-square forms of the extended Lagrangian
    /// agree when the frame is orthonormal.
    #[test]
    fn two_forms_agree_on_orthonormal_frames(
        x in vec_in(3, -3.0, 3.0),
        xdot in vec_in(3, -3.0, 3.0),
        mu in vec_in(2, -2.0, 2.0),
        lambda in 0.5f64..1e4,
        rotating in any::<bool>(),
    ) {
        let model: Arc<dyn SystemModel> = if rotating { Arc::new(RotatingFrame) } else { Arc::new(unicycle_const_vel()) };
        let ctx = LagrangianContext::unconstrained(model, lambda).unwrap();
        let a = extended_lagrangian(&ctx, &x, &xdot, &mu).unwrap();
        let b = extended_lagrangian_completed_square(&ctx, &x, &xdot, &mu).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0), "{a} vs {b}");
    }

    #[test]
    fn penalty_dual_term_is_exact(h in -3.0f64..3.0, mu in -5.0f64..5.0, lc in 0.1f64..1e3, k in 1.0f64..200.0) {
        let cs = ConstraintSet::new(Vec::new(), lc, k).unwrap();
        let lhs = penalty_term(h, mu, &cs) - penalty_term(h, 0.0, &cs);
        let rhs = lc * 2.0 * h * mu * heatflow::lagrangian::switching(h, k);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }
}

/// `d^2 L / dxdot^2 = 2 G` is positive definite: the velocity gradient is
/// linear in `xdot` with that Hessian.
#[test]
fn velocity_hessian_is_twice_the_metric() {
    let model = diver_unit();
    let ctx = LagrangianContext::new(model.clone(), 10.0, diver_box(10.0)).unwrap();
    let x = v(&[0.3, -0.7, 1.1, 0.2, 0.0, -0.4]);
    let duals = DualState { mu: v(&[0.1, -0.2, 0.3, 0.05]), mu_c: v(&[0.2, 0.0]) };
    let g = heatflow::geometry::metric(model.as_ref(), &x, &ctx.params).unwrap();
    assert!(g.clone().cholesky().is_some());
    let base = grad_xdot(&ctx, &x, &DVector::zeros(6), &duals).unwrap();
    for i in 0..6 {
        let mut e = DVector::zeros(6);
        e[i] = 1.0;
        let col = grad_xdot(&ctx, &x, &e, &duals).unwrap() - &base;
        assert!(close(&col, &(g.column(i) * 2.0).into_owned(), 1e-10, 1e-12));
    }
}
