//! Integration of the flow in the evolution variable `s`.
//!
//! Each step is linearly implicit in the states: with `M = blockdiag(w_k dt G_k)`
//! and `K` the Gauss-Newton Hessian of the discrete action,
//!
//! ```text
//! (M + ds K) dx = -ds dA/dx
//! ```
//!
//! followed by a forward update of the duals evaluated at the new states.
//! `M + ds K` is block tridiagonal and symmetric positive definite, so every
//! state update is a descent direction of the action at frozen duals.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{HeatflowError, Result};
use crate::flow::discrete::{action, evaluate, evaluate_duals, node_weight, Evaluation};
use crate::flow::grid::{BoundarySpec, TrajectoryGrid};
use crate::flow::Method;
use crate::lagrangian::LagrangianContext;

/// Solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub method: Method,
    /// Convergence threshold on the sup norms of all flow fields.
    pub epsilon: f64,
    pub s_max: f64,
    /// Convergence is not declared before `s >= min_s`.
    pub min_s: f64,
    /// Wall-clock budget in seconds.
    pub wall_limit: f64,
    pub ds_init: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub growth: f64,
    pub shrink: f64,
    /// Largest allowed per-step state change (sup norm).
    pub max_state_change: f64,
    /// Hold the duals at their initial values.
    pub freeze_duals: bool,
    /// Reject state updates that raise the action at the current duals.
    pub energy_guard: bool,
    /// Action history entries kept before thinning.
    pub history_cap: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::ElAghf,
            epsilon: 1e-4,
            s_max: 1e4,
            min_s: 0.0,
            wall_limit: 600.0,
            ds_init: 1e-3,
            ds_min: 1e-12,
            ds_max: 0.3,
            growth: 1.2,
            shrink: 0.5,
            max_state_change: 1.0,
            freeze_duals: false,
            energy_guard: true,
            history_cap: 10_000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HeatflowError::InvalidConfig(m.to_string()));
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !(self.s_max > 0.0) {
            return bad("s_max must be positive");
        }
        if !(self.min_s >= 0.0) {
            return bad("min_s must be non-negative");
        }
        if !(self.wall_limit > 0.0) {
            return bad("wall_limit must be positive");
        }
        if !(self.ds_min > 0.0 && self.ds_min <= self.ds_init && self.ds_init <= self.ds_max) {
            return bad("need 0 < ds_min <= ds_init <= ds_max");
        }
        if !(self.growth >= 1.0) || !(self.shrink > 0.0 && self.shrink < 1.0) {
            return bad("need growth >= 1 and 0 < shrink < 1");
        }
        if !(self.max_state_change > 0.0) {
            return bad("max_state_change must be positive");
        }
        if self.history_cap < 2 {
            return bad("history_cap must be at least 2");
        }
        Ok(())
    }

    fn duals_move(&self) -> bool {
        self.method == Method::ElAghf && !self.freeze_duals
    }
}

/// Why the integration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxEvolution,
    WallLimit,
    StepUnderflow,
}

/// Outcome of [`solve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub converged: bool,
    pub termination: Termination,
    pub s_reached: f64,
    pub wall_time_s: f64,
    pub steps: usize,
    pub rejected_steps: usize,
    /// `(s, action)` samples.
    pub action_history: Vec<(f64, f64)>,
    pub final_action: f64,
    pub state_residual: f64,
    pub mu_residual: f64,
    pub mu_c_residual: f64,
}

/// Why a step was refused.
#[derive(Debug)]
enum Rejection {
    NonFinite,
    TooLarge,
    ActionIncrease,
    Eval,
}

impl Rejection {
    fn reason(&self) -> &'static str {
        match self {
            Rejection::NonFinite => "non-finite update",
            Rejection::TooLarge => "state change exceeds guard",
            Rejection::ActionIncrease => "action increased at fixed duals",
            Rejection::Eval => "flow evaluation failed",
        }
    }
}

/// Solves the block-tridiagonal SPD system with `diag[k]` on the diagonal
/// and `upper[k]` coupling nodes `k` and `k + 1` (lower blocks are the
/// transposes).
pub(crate) fn block_tridiagonal_solve(
    diag: &[DMatrix<f64>],
    upper: &[DMatrix<f64>],
    rhs: &[DVector<f64>],
) -> Option<Vec<DVector<f64>>> {
    let nb = diag.len();
    debug_assert_eq!(upper.len() + 1, nb);
    let mut c_prime: Vec<DMatrix<f64>> = Vec::with_capacity(nb);
    let mut d_prime: Vec<DVector<f64>> = Vec::with_capacity(nb);
    for k in 0..nb {
        let (a, b) = if k == 0 {
            (diag[0].clone(), rhs[0].clone())
        } else {
            let lower = upper[k - 1].transpose();
            (
                &diag[k] - &lower * &c_prime[k - 1],
                &rhs[k] - &lower * &d_prime[k - 1],
            )
        };
        let lu = a.lu();
        if k + 1 < nb {
            c_prime.push(lu.solve(&upper[k])?);
        }
        d_prime.push(lu.solve(&b)?);
    }
    let mut x = vec![DVector::zeros(0); nb];
    x[nb - 1] = d_prime[nb - 1].clone();
    for k in (0..nb - 1).rev() {
        x[k] = &d_prime[k] - &c_prime[k] * &x[k + 1];
    }
    Some(x)
}

/// State increment from the linearly implicit update.
fn state_increment(
    grid: &TrajectoryGrid,
    boundary: &BoundarySpec,
    ev: &Evaluation,
    ds: f64,
) -> Option<Vec<DVector<f64>>> {
    let nt = grid.nt();
    let n = grid.state_dim();
    let dt = grid.dt();
    let mut diag: Vec<DMatrix<f64>> = (0..nt)
        .map(|k| &ev.node_metric[k] * (node_weight(k, nt) * dt))
        .collect();
    let mut upper: Vec<DMatrix<f64>> = Vec::with_capacity(nt - 1);
    for (c, cell) in ev.cells.iter().enumerate() {
        let [ll, lr, rr] = cell.gn.as_ref().expect("full evaluation");
        diag[c] += ll * ds;
        diag[c + 1] += rr * ds;
        upper.push(lr * ds);
    }
    let mut rhs: Vec<DVector<f64>> = ev.grad.iter().map(|g| g * (-ds)).collect();

    for k in [0, nt - 1] {
        for i in 0..n {
            if boundary.is_fixed(k, nt, i) {
                diag[k].row_mut(i).fill(0.0);
                diag[k].column_mut(i).fill(0.0);
                diag[k][(i, i)] = 1.0;
                rhs[k][i] = 0.0;
                if k + 1 < nt {
                    upper[k].row_mut(i).fill(0.0);
                }
                if k > 0 {
                    upper[k - 1].column_mut(i).fill(0.0);
                }
            }
        }
    }
    block_tridiagonal_solve(&diag, &upper, &rhs)
}

fn try_step(
    ctx: &LagrangianContext,
    grid: &TrajectoryGrid,
    ev: &Evaluation,
    boundary: &BoundarySpec,
    config: &SolverConfig,
    ds: f64,
) -> std::result::Result<(TrajectoryGrid, Evaluation), Rejection> {
    let dx = state_increment(grid, boundary, ev, ds).ok_or(Rejection::NonFinite)?;
    let mut change: f64 = 0.0;
    for d in &dx {
        for v in d.iter() {
            if !v.is_finite() {
                return Err(Rejection::NonFinite);
            }
            change = change.max(v.abs());
        }
    }
    if change > config.max_state_change {
        return Err(Rejection::TooLarge);
    }

    let mut next = grid.clone();
    for (x, d) in next.states.iter_mut().zip(&dx) {
        *x += d;
    }
    boundary.clamp(&mut next);
    let slack = 1e-12 * ev.action.abs().max(f64::MIN_POSITIVE);

    if config.duals_move() {
        if config.energy_guard {
            // descent in the states at the old duals
            let a = action(ctx, &next, config.method).map_err(|_| Rejection::Eval)?;
            if !a.is_finite() {
                return Err(Rejection::NonFinite);
            }
            if a > ev.action + slack {
                return Err(Rejection::ActionIncrease);
            }
        }
        let (mu_rhs, mu_c_rhs) = evaluate_duals(ctx, &next).map_err(|_| Rejection::Eval)?;
        for (mu, r) in next.mu.iter_mut().zip(&mu_rhs) {
            mu.axpy(ds, r, 1.0);
        }
        for (mu, r) in next.mu_c.iter_mut().zip(&mu_c_rhs) {
            mu.axpy(ds, r, 1.0);
        }
    }
    if !next.is_finite() {
        return Err(Rejection::NonFinite);
    }

    let next_ev = evaluate(ctx, &next, boundary, config.method).map_err(|_| Rejection::Eval)?;
    if !next_ev.action.is_finite() {
        return Err(Rejection::NonFinite);
    }
    if config.energy_guard && !config.duals_move() && next_ev.action > ev.action + slack {
        return Err(Rejection::ActionIncrease);
    }
    Ok((next, next_ev))
}

/// One flow step of size `ds`.
///
/// Returns [`HeatflowError::StepRejected`] when the update is non-finite,
/// moves a state component by more than `config.max_state_change`, or (with
/// the energy guard on) raises the action at the current duals.
pub fn step(
    ctx: &LagrangianContext,
    grid: &TrajectoryGrid,
    boundary: &BoundarySpec,
    config: &SolverConfig,
    ds: f64,
) -> Result<TrajectoryGrid> {
    if !(ds > 0.0) {
        return Err(HeatflowError::InvalidConfig(format!("ds must be positive, got {ds}")));
    }
    let ev = evaluate(ctx, grid, boundary, config.method)?;
    try_step(ctx, grid, &ev, boundary, config, ds)
        .map(|(g, _)| g)
        .map_err(|r| HeatflowError::StepRejected(r.reason()))
}

struct History {
    samples: Vec<(f64, f64)>,
    stride: usize,
    cap: usize,
    seen: usize,
}

impl History {
    fn new(cap: usize) -> Self {
        Self {
            samples: Vec::new(),
            stride: 1,
            cap,
            seen: 0,
        }
    }

    fn record(&mut self, s: f64, action: f64) {
        if self.seen.is_multiple_of(self.stride) {
            if self.samples.len() >= self.cap {
                let kept: Vec<_> = self.samples.iter().copied().step_by(2).collect();
                self.samples = kept;
                self.stride *= 2;
            }
            if self.seen.is_multiple_of(self.stride) {
                self.samples.push((s, action));
            }
        }
        self.seen += 1;
    }
}

/// Integrates the flow from `init` until convergence, `s_max`, or the wall limit.
///
/// Non-convergence is reported through [`SolveReport`], not as an error.
pub fn solve(
    ctx: &LagrangianContext,
    init: &TrajectoryGrid,
    boundary: &BoundarySpec,
    config: &SolverConfig,
) -> Result<(TrajectoryGrid, SolveReport)> {
    config.validate()?;
    boundary.check(init)?;
    let started = Instant::now();

    let mut grid = init.clone();
    boundary.clamp(&mut grid);
    let mut ev = evaluate(ctx, &grid, boundary, config.method)?;

    let mut s = 0.0;
    let mut ds = config.ds_init;
    let mut steps = 0;
    let mut rejected = 0;
    let mut history = History::new(config.history_cap);
    history.record(s, ev.action);

    let termination = loop {
        let converged = ev.state_residual() < config.epsilon
            && ev.mu_residual() < config.epsilon
            && ev.mu_c_residual() < config.epsilon;
        if converged && s >= config.min_s {
            break Termination::Converged;
        }
        if s >= config.s_max {
            break Termination::MaxEvolution;
        }
        if started.elapsed().as_secs_f64() > config.wall_limit {
            break Termination::WallLimit;
        }

        let trial = ds.min(config.s_max - s).max(config.ds_min);
        match try_step(ctx, &grid, &ev, boundary, config, trial) {
            Ok((next, next_ev)) => {
                grid = next;
                ev = next_ev;
                s += trial;
                steps += 1;
                history.record(s, ev.action);
                ds = (trial * config.growth).min(config.ds_max);
            }
            Err(_) => {
                rejected += 1;
                if trial <= config.ds_min {
                    break Termination::StepUnderflow;
                }
                ds = (trial * config.shrink).max(config.ds_min);
            }
        }
    };

    let report = SolveReport {
        converged: termination == Termination::Converged,
        termination,
        s_reached: s,
        wall_time_s: started.elapsed().as_secs_f64(),
        steps,
        rejected_steps: rejected,
        action_history: history.samples,
        final_action: ev.action,
        state_residual: ev.state_residual(),
        mu_residual: ev.mu_residual(),
        mu_c_residual: ev.mu_c_residual(),
    };
    Ok((grid, report))
}
