#![allow(dead_code)]

use std::sync::Arc;

use heatflow::prelude::*;
use nalgebra::{DMatrix, DVector, Rotation3, Vector3};

pub fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

/// Box on the diver's second shape angle, as in the constrained experiments.
pub fn diver_box(lambda_c: f64) -> ConstraintSet {
    let mut cs = ConstraintSet::new(Vec::new(), lambda_c, 100.0).unwrap();
    cs.push_box(2, -1.9, 1.9);
    cs
}

pub fn diver_unit() -> Arc<dyn SystemModel> {
    Arc::new(diver3(DiverParams::default()).unwrap())
}

/// Diver boundary: full somersault, zero shape and rates, with the last
/// shape rate free at the start and the first shape rate free at the end.
pub fn diver_boundary() -> (DVector<f64>, DVector<f64>, BoundarySpec) {
    let x0 = DVector::zeros(6);
    let xf = v(&[2.0 * std::f64::consts::PI, 0.0, 0.0, 0.0, 0.0, 0.0]);
    let mut fs = [false; 6];
    fs[5] = true;
    let mut fe = [false; 6];
    fe[4] = true;
    let b = BoundarySpec::with_free(&x0, &xf, &fs, &fe).unwrap();
    (x0, xf, b)
}

/// Drift-free system whose frame is a state-dependent rotation, so `Fbar`
/// is orthonormal but not the identity.
#[derive(Debug, Clone, Copy)]
pub struct RotatingFrame;

impl RotatingFrame {
    fn rotation(x: &DVector<f64>) -> DMatrix<f64> {
        let r = Rotation3::from_axis_angle(&Vector3::z_axis(), x[0])
            * Rotation3::from_axis_angle(&Vector3::x_axis(), 0.5 * x[1]);
        DMatrix::from_iterator(3, 3, r.matrix().iter().copied())
    }
}

impl SystemModel for RotatingFrame {
    fn name(&self) -> &str {
        "rotating_frame"
    }
    fn state_dim(&self) -> usize {
        3
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        v(&[0.1 * x[2].sin(), 0.0, 0.2])
    }
    fn actuation(&self, x: &DVector<f64>) -> DMatrix<f64> {
        Self::rotation(x).columns(2, 1).into_owned()
    }
    fn inadmissible(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(Self::rotation(x).columns(0, 2).into_owned())
    }
}

/// Central finite-difference gradient of a scalar function.
pub fn fd_gradient(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_iterator(
        x.len(),
        (0..x.len()).map(|i| {
            let step = h * x[i].abs().max(1.0);
            let mut p = x.clone();
            let mut m = x.clone();
            p[i] += step;
            m[i] -= step;
            (f(&p) - f(&m)) / (2.0 * step)
        }),
    )
}

/// `|a - b|_inf <= rel * |b|_inf + abs`
pub fn close(a: &DVector<f64>, b: &DVector<f64>, rel: f64, abs: f64) -> bool {
    (a - b).amax() <= rel * b.amax() + abs
}

/// Compares all four analytic partials of `Lbar^c` against central
/// differences (1e-5 relative, 1e-8 absolute floor).
pub fn gradient_mismatch(
    ctx: &LagrangianContext,
    x: &DVector<f64>,
    xdot: &DVector<f64>,
    duals: &DualState,
) -> std::result::Result<(), String> {
    use heatflow::lagrangian::{constrained_extended_lagrangian, grad_mu, grad_mu_c, grad_x, grad_xdot};
    let l = |x: &DVector<f64>, v: &DVector<f64>, d: &DualState| constrained_extended_lagrangian(ctx, x, v, d).unwrap();
    let h = 1e-6;
    // Lbar^c is quadratic in xdot and linear in both duals, so central
    // differences are exact there for any step; a large one avoids roundoff.
    let exact = 1e-1;
    let (rel, abs) = (1e-5, 1e-8);
    let checks = [
        ("grad_x", grad_x(ctx, x, xdot, duals).unwrap(), fd_gradient(|y| l(y, xdot, duals), x, h)),
        ("grad_xdot", grad_xdot(ctx, x, xdot, duals).unwrap(), fd_gradient(|y| l(x, y, duals), xdot, exact)),
        (
            "grad_mu",
            grad_mu(ctx, x, xdot, duals).unwrap(),
            fd_gradient(|m| l(x, xdot, &DualState { mu: m.clone(), mu_c: duals.mu_c.clone() }), &duals.mu, exact),
        ),
        (
            "grad_mu_c",
            grad_mu_c(ctx, x, duals).unwrap(),
            fd_gradient(|m| l(x, xdot, &DualState { mu: duals.mu.clone(), mu_c: m.clone() }), &duals.mu_c, exact),
        ),
    ];
    for (name, an, fd) in checks {
        if !close(&an, &fd, rel, abs) {
            return Err(format!("{} {name}: analytic {an} vs fd {fd}", ctx.model.name()));
        }
    }
    Ok(())
}

/// Context with one symmetric box, used by the gradient checks.
pub fn boxed(model: Arc<dyn SystemModel>, lambda: f64, index: usize, bound: f64) -> LagrangianContext {
    let mut cs = ConstraintSet::new(Vec::new(), lambda, 100.0).unwrap();
    cs.push_box(index, -bound, bound);
    LagrangianContext::new(model, lambda, cs).unwrap()
}

/// Takes adaptive frozen-dual steps (no action guard) and returns the
/// largest relative action increase over `count` accepted steps.
pub fn frozen_descent(
    ctx: &LagrangianContext,
    grid: &TrajectoryGrid,
    boundary: &BoundarySpec,
    count: usize,
) -> std::result::Result<f64, String> {
    use heatflow::flow::action;
    let cfg = SolverConfig { method: Method::ElAghf, freeze_duals: true, energy_guard: false, ..Default::default() };
    let mut grid = grid.clone();
    let mut ds = cfg.ds_init;
    let mut prev = action(ctx, &grid, Method::ElAghf).unwrap();
    let (mut accepted, mut tries) = (0, 0);
    let mut worst = f64::NEG_INFINITY;
    while accepted < count {
        tries += 1;
        if tries > 20 * count {
            return Err(format!("only {accepted} of {count} steps accepted"));
        }
        match step(ctx, &grid, boundary, &cfg, ds) {
            Ok(next) => {
                let a = action(ctx, &next, Method::ElAghf).unwrap();
                worst = worst.max((a - prev) / prev.abs().max(f64::MIN_POSITIVE));
                if next.mu != grid.mu || next.mu_c != grid.mu_c {
                    return Err("duals moved".into());
                }
                prev = a;
                grid = next;
                accepted += 1;
                ds = (ds * cfg.growth).min(cfg.ds_max);
            }
            Err(HeatflowError::StepRejected(_)) => ds *= cfg.shrink,
            Err(e) => return Err(e.to_string()),
        }
    }
    Ok(worst)
}

/// Unicycle states sampled from an RK4 rollout of `u = sin(1.3 t)`, with a
/// box on `x2` that the motion stays well clear of.
pub fn feasible_grid(nt: usize) -> (LagrangianContext, TrajectoryGrid) {
    let model: Arc<dyn SystemModel> = Arc::new(unicycle_const_vel());
    let mut cs = ConstraintSet::new(Vec::new(), 10.0, 100.0).unwrap();
    cs.push_box(1, -2.0, 2.0);
    let ctx = LagrangianContext::new(model.clone(), 10.0, cs).unwrap();
    let horizon = 2.0;
    let sub = 16;
    let fine = (nt - 1) * sub + 1;
    let times: Vec<f64> = (0..fine).map(|k| horizon * k as f64 / (fine - 1) as f64).collect();
    let u = DMatrix::from_fn(fine, 1, |k, _| (1.3 * times[k]).sin());
    let dt = horizon / (fine - 1) as f64;
    let (_, xs) = heatflow::verify::rollout(model.as_ref(), &u, &times, &v(&[0.0, 0.0, 0.0]), Some(dt)).unwrap();
    let states = (0..nt).map(|k| xs[k * sub].clone()).collect();
    let g = TrajectoryGrid::from_states(horizon, states, 2, 2).unwrap();
    (ctx, g)
}

pub fn sup(fields: &[DVector<f64>]) -> f64 {
    fields.iter().map(|v| v.amax()).fold(0.0, f64::max)
}
