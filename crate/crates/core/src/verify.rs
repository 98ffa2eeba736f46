//! Control extraction, open-loop rollout and admissibility metrics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{HeatflowError, Result};
use crate::flow::{time_derivatives, BoundarySpec, TrajectoryGrid};
use crate::lagrangian::ConstraintSet;
use crate::system::{least_squares, SystemModel};

/// Rollout substeps per horizon when no step is given.
pub const DEFAULT_ROLLOUT_STEPS: usize = 2000;

/// Least-squares controls `u_k = F(x_k)^+ (xdot_k - F_d(x_k))`, one row per node.
pub fn extract_control(model: &dyn SystemModel, grid: &TrajectoryGrid) -> Result<DMatrix<f64>> {
    let m = model.control_dim();
    let vel = time_derivatives(grid);
    let mut u = DMatrix::zeros(grid.nt(), m);
    for (k, (x, v)) in grid.states.iter().zip(&vel).enumerate() {
        let f = model.actuation(x);
        if f.nrows() != x.len() || f.ncols() != m {
            return Err(HeatflowError::DimensionMismatch(format!(
                "actuation is {}x{}, expected {}x{m}",
                f.nrows(),
                f.ncols(),
                x.len()
            )));
        }
        let uk = least_squares(&f, &(v - model.drift(x)));
        if uk.iter().any(|c| !c.is_finite()) {
            return Err(HeatflowError::NonFiniteField("extracted control"));
        }
        u.set_row(k, &uk.transpose());
    }
    Ok(u)
}

/// Piecewise-linear interpolation of control samples given at `times`.
fn control_at(u: &DMatrix<f64>, times: &[f64], t: f64) -> DVector<f64> {
    let last = times.len() - 1;
    if t <= times[0] {
        return u.row(0).transpose();
    }
    if t >= times[last] {
        return u.row(last).transpose();
    }
    let k = times.partition_point(|&tk| tk <= t).saturating_sub(1).min(last - 1);
    let a = (t - times[k]) / (times[k + 1] - times[k]);
    (u.row(k) * (1.0 - a) + u.row(k + 1) * a).transpose()
}

/// Integrates `xdot = F_d(x) + F(x) u(t)` with classical RK4 at step `dt`
/// (the last step is shortened to land on the final sample time).
/// Returns the sample times and states.
pub fn rollout(
    model: &dyn SystemModel,
    u: &DMatrix<f64>,
    times: &[f64],
    x0: &DVector<f64>,
    dt: Option<f64>,
) -> Result<(Vec<f64>, Vec<DVector<f64>>)> {
    if times.len() < 2 || u.nrows() != times.len() {
        return Err(HeatflowError::DimensionMismatch(format!(
            "{} control samples for {} times",
            u.nrows(),
            times.len()
        )));
    }
    if u.ncols() != model.control_dim() || x0.len() != model.state_dim() {
        return Err(HeatflowError::DimensionMismatch("control or state width".into()));
    }
    let t0 = times[0];
    let horizon = times[times.len() - 1] - t0;
    let dt = dt.unwrap_or(horizon / DEFAULT_ROLLOUT_STEPS as f64);
    if !(dt > 0.0) || dt > horizon {
        return Err(HeatflowError::InvalidConfig(format!(
            "rollout step {dt} must lie in (0, {horizon}]"
        )));
    }
    let f = |t: f64, x: &DVector<f64>| model.drift(x) + model.actuation(x) * control_at(u, times, t);

    let steps = (horizon / dt - 1e-9).ceil().max(1.0) as usize;
    let mut ts = Vec::with_capacity(steps + 1);
    let mut xs = Vec::with_capacity(steps + 1);
    let mut x = x0.clone();
    ts.push(t0);
    xs.push(x.clone());
    for i in 0..steps {
        let t = t0 + i as f64 * dt;
        let t_next = if i + 1 == steps { t0 + horizon } else { t0 + (i + 1) as f64 * dt };
        let h = t_next - t;
        let k1 = f(t, &x);
        let k2 = f(t + 0.5 * h, &(&x + &k1 * (0.5 * h)));
        let k3 = f(t + 0.5 * h, &(&x + &k2 * (0.5 * h)));
        let k4 = f(t + h, &(&x + &k3 * h));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(HeatflowError::NonFiniteField("rollout"));
        }
        ts.push(t_next);
        xs.push(x.clone());
    }
    Ok((ts, xs))
}

/// Extracted controls, the rollout they produce and the admissibility metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutResult {
    #[serde(skip)]
    pub u_samples: DMatrix<f64>,
    #[serde(skip)]
    pub times: Vec<f64>,
    #[serde(skip)]
    pub x_tilde: Vec<DVector<f64>>,
    /// `|x~(T) - x_f|` over terminally fixed components.
    pub e_t: f64,
    /// `|x~(T) - x(T)|` over all components.
    pub e_hat_t: f64,
    /// Integrated constraint violation.
    pub e_viol: f64,
}

/// `(e_T, e_hat_T, e_viol)` for a solution grid and its rollout end state.
///
/// `e_viol = int sum_j max(h_j(x(t)), 0) dt` by the trapezoid rule on the grid,
/// with `h_j <= 0` meaning feasible.
pub fn metrics(
    grid: &TrajectoryGrid,
    x_tilde_end: &DVector<f64>,
    boundary: &BoundarySpec,
    constraints: &ConstraintSet,
) -> (f64, f64, f64) {
    let end = &grid.states[grid.nt() - 1];
    let mut e_t = 0.0;
    for (i, target) in boundary.terminal_fixed().iter().enumerate() {
        if let Some(v) = target {
            e_t += (x_tilde_end[i] - v).powi(2);
        }
    }
    let e_hat_t = (x_tilde_end - end).norm();

    let excess: Vec<f64> = grid
        .states
        .iter()
        .map(|x| constraints.values(x).iter().map(|h| h.max(0.0)).fold(0.0, |a, b| a + b))
        .collect();
    let dt = grid.dt();
    // fold from +0.0: an empty f64 sum is -0.0
    let e_viol = excess.windows(2).map(|w| 0.5 * dt * (w[0] + w[1])).fold(0.0, |a, b| a + b);
    (e_t.sqrt(), e_hat_t, e_viol)
}

/// Extract, roll out from the grid's initial state, and score.
pub fn verify(
    model: &dyn SystemModel,
    grid: &TrajectoryGrid,
    boundary: &BoundarySpec,
    constraints: &ConstraintSet,
    dt: Option<f64>,
) -> Result<RolloutResult> {
    let u = extract_control(model, grid)?;
    let (times, xs) = rollout(model, &u, &grid.times(), &grid.states[0], dt)?;
    let (e_t, e_hat_t, e_viol) = metrics(grid, &xs[xs.len() - 1], boundary, constraints);
    Ok(RolloutResult {
        u_samples: u,
        times,
        x_tilde: xs,
        e_t,
        e_hat_t,
        e_viol,
    })
}
