//! Discrete action and its flow fields.
//!
//! The horizon is split into `nt - 1` cells. On cell `c = [t_k, t_{k+1}]` the
//! Lagrangian is evaluated at the midpoint state `(x_k + x_{k+1}) / 2` with
//! the compact velocity `(x_{k+1} - x_k) / dt` and averaged duals, and the
//! discrete action is `sum_c dt * Lbar^c(cell)`. Nodal flow fields are the
//! metric-preconditioned negative gradients of that sum, scaled by the
//! node's quadrature weight (`1` inside, `1/2` at the ends):
//!
//! ```text
//! dx_k/ds     = -G(x_k)^{-1} dA/dx_k / (w_k dt)
//! dmu_k/ds    =  (F_c^T G F_c)^{-1} dA/dmu_k / (w_k dt)
//! dmu_c_k/ds  =  (1 / lambda_c)     dA/dmu_c_k / (w_k dt)
//! ```
//!
//! In the interior the first line is the usual
//! `G^{-1}(d/dt dL/dxdot - dL/dx)` with compact differences. At a free end
//! component it drives the flux `dL/dxdot` to zero, which is the natural
//! boundary condition.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{HeatflowError, Result};
use crate::flow::grid::{time_derivatives, BoundarySpec, TrajectoryGrid};
use crate::flow::Method;
use crate::geometry::{metric_from_frame, metric_inverse_from_frame};
use crate::lagrangian::{penalty_curvature, penalty_gradient, penalty_term, switching, LagrangianContext, PointEval};
use crate::system::Frame;

/// What to compute per cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Level {
    /// Gaps and constraint values only (enough for the dual fields).
    Gaps,
    /// Gaps, constraint values and the cell Lagrangian.
    Value,
    /// Everything, including gradients and Gauss-Newton blocks.
    Full,
}

pub(crate) struct CellData {
    pub z: DVector<f64>,
    /// Constraint values at the cell midpoint.
    pub h: DVector<f64>,
    pub value: f64,
    pub grad_x: DVector<f64>,
    pub grad_v: DVector<f64>,
    /// Gauss-Newton blocks `(left-left, left-right, right-right)` of the cell term.
    pub gn: Option<[DMatrix<f64>; 3]>,
}

pub(crate) struct Evaluation {
    pub cells: Vec<CellData>,
    pub action: f64,
    /// `dA/dx_k`
    pub grad: Vec<DVector<f64>>,
    pub state_rhs: Vec<DVector<f64>>,
    pub mu_rhs: Vec<DVector<f64>>,
    pub mu_c_rhs: Vec<DVector<f64>>,
    /// `G(x_k)`
    pub node_metric: Vec<DMatrix<f64>>,
}

fn sup_norm(fields: &[DVector<f64>]) -> f64 {
    fields.iter().map(|v| v.amax()).fold(0.0, f64::max)
}

impl Evaluation {
    pub fn state_residual(&self) -> f64 {
        sup_norm(&self.state_rhs)
    }
    pub fn mu_residual(&self) -> f64 {
        sup_norm(&self.mu_rhs)
    }
    pub fn mu_c_residual(&self) -> f64 {
        sup_norm(&self.mu_c_rhs)
    }
}

pub(crate) fn node_weight(k: usize, nt: usize) -> f64 {
    if k == 0 || k + 1 == nt {
        0.5
    } else {
        1.0
    }
}

fn check_grid(ctx: &LagrangianContext, grid: &TrajectoryGrid) -> Result<()> {
    let n = ctx.n();
    let ok = grid.states.iter().all(|s| s.len() == n)
        && grid.mu.len() == grid.nt()
        && grid.mu_c.len() == grid.nt()
        && grid.mu.iter().all(|s| s.len() == ctx.nc())
        && grid.mu_c.iter().all(|s| s.len() == ctx.constraints.len());
    if ok {
        Ok(())
    } else {
        Err(HeatflowError::DimensionMismatch(format!(
            "grid does not match context (n={}, n-m={}, constraints={})",
            n,
            ctx.nc(),
            ctx.constraints.len()
        )))
    }
}

fn eval_cell(
    ctx: &LagrangianContext,
    grid: &TrajectoryGrid,
    method: Method,
    c: usize,
    level: Level,
) -> Result<CellData> {
    let dt = grid.dt();
    let (xl, xr) = (&grid.states[c], &grid.states[c + 1]);
    let x = (xl + xr) * 0.5;
    let v = (xr - xl) / dt;
    let full = level == Level::Full;
    let pe = PointEval::new(ctx, &x, &v, full)?;
    let cs = &ctx.constraints;
    let h = cs.values(&x);
    let partial = |value| CellData {
        z: pe.z.clone(),
        h: h.clone(),
        value,
        grad_x: DVector::zeros(0),
        grad_v: DVector::zeros(0),
        gn: None,
    };
    if level == Level::Gaps {
        return Ok(partial(0.0));
    }

    let (mu, mu_c) = match method {
        Method::ElAghf => (
            (&grid.mu[c] + &grid.mu[c + 1]) * 0.5,
            (&grid.mu_c[c] + &grid.mu_c[c + 1]) * 0.5,
        ),
        Method::Aghf => (DVector::zeros(ctx.nc()), DVector::zeros(cs.len())),
    };

    let mut value = pe.extended_value(ctx, &mu);
    for (hj, mj) in h.iter().zip(mu_c.iter()) {
        value += penalty_term(*hj, *mj, cs);
    }
    if !full {
        return Ok(partial(value));
    }
    let w = pe.dl_dz(ctx, Some(&mu));
    let dz = pe.dz_dx.as_ref().expect("full evaluation");
    let grad_v = pe.frame.inverse.tr_mul(&w);
    let grad_x = dz.tr_mul(&w) + penalty_gradient(ctx, &x, &mu_c);

    // Gauss-Newton model of the cell term in (x_k, x_{k+1})
    let inv_dt = &pe.frame.inverse / dt;
    let half = dz * 0.5;
    let jl = &half - &inv_dt;
    let jr = &half + &inv_dt;
    let d = ctx.params.scaling_diagonal();
    let scale = |j: &DMatrix<f64>| {
        let mut s = j.clone();
        for (i, mut row) in s.row_iter_mut().enumerate() {
            row *= d[i];
        }
        s
    };
    let (djl, djr) = (scale(&jl), scale(&jr));
    let mut ll = jl.tr_mul(&djl) * (2.0 * dt);
    let mut lr = jl.tr_mul(&djr) * (2.0 * dt);
    let mut rr = jr.tr_mul(&djr) * (2.0 * dt);
    for ((con, hj), mj) in cs.constraints.iter().zip(h.iter()).zip(mu_c.iter()) {
        let curv = penalty_curvature(*hj, *mj, cs);
        if curv > 0.0 {
            let gh = con.gradient(&x);
            let outer = &gh * gh.transpose() * (0.25 * curv * dt);
            ll += &outer;
            lr += &outer;
            rr += &outer;
        }
    }

    Ok(CellData {
        z: pe.z,
        h,
        value,
        grad_x,
        grad_v,
        gn: Some([ll, lr, rr]),
    })
}

fn dual_fields(
    ctx: &LagrangianContext,
    cells: &[CellData],
    nt: usize,
) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let nc = ctx.nc();
    let cs = &ctx.constraints;
    let mut mu = vec![DVector::zeros(nc); nt];
    let mut mu_c = vec![DVector::zeros(cs.len()); nt];
    for (c, cell) in cells.iter().enumerate() {
        // (F_c^T G F_c)^{-1} = I / lambda for every frame, so the lambda cancels
        let gap = cell.z.rows(0, nc);
        let hs = DVector::from_iterator(cs.len(), cell.h.iter().map(|&h| h * switching(h, cs.sharpness)));
        for k in [c, c + 1] {
            mu[k] += &gap;
            mu_c[k] += &hs;
        }
    }
    for k in 0..nt {
        let w = node_weight(k, nt);
        mu[k] /= w;
        mu_c[k] /= w;
    }
    (mu, mu_c)
}

pub(crate) fn evaluate_cells(
    ctx: &LagrangianContext,
    grid: &TrajectoryGrid,
    method: Method,
    level: Level,
) -> Result<Vec<CellData>> {
    check_grid(ctx, grid)?;
    (0..grid.nt() - 1)
        .into_par_iter()
        .map(|c| eval_cell(ctx, grid, method, c, level))
        .collect()
}

type DualFields = (Vec<DVector<f64>>, Vec<DVector<f64>>);

/// Dual fields only; they depend on the states alone.
pub(crate) fn evaluate_duals(ctx: &LagrangianContext, grid: &TrajectoryGrid) -> Result<DualFields> {
    let cells = evaluate_cells(ctx, grid, Method::ElAghf, Level::Gaps)?;
    Ok(dual_fields(ctx, &cells, grid.nt()))
}

/// Free components of node `k`.
fn free_components(boundary: &BoundarySpec, k: usize, nt: usize, n: usize) -> Vec<usize> {
    (0..n).filter(|&i| !boundary.is_fixed(k, nt, i)).collect()
}

pub(crate) fn evaluate(
    ctx: &LagrangianContext,
    grid: &TrajectoryGrid,
    boundary: &BoundarySpec,
    method: Method,
) -> Result<Evaluation> {
    let cells = evaluate_cells(ctx, grid, method, Level::Full)?;
    let nt = grid.nt();
    let n = ctx.n();
    let dt = grid.dt();

    let mut grad = vec![DVector::zeros(n); nt];
    let mut action = 0.0;
    for (c, cell) in cells.iter().enumerate() {
        action += dt * cell.value;
        let half = &cell.grad_x * (0.5 * dt);
        grad[c] += &half - &cell.grad_v;
        grad[c + 1] += &half + &cell.grad_v;
    }

    let frames: Vec<(DMatrix<f64>, DMatrix<f64>)> = (0..nt)
        .into_par_iter()
        .map(|k| {
            let frame = Frame::at(ctx.model.as_ref(), &grid.states[k])?;
            Ok((
                metric_from_frame(&frame, &ctx.params),
                metric_inverse_from_frame(&frame, &ctx.params),
            ))
        })
        .collect::<Result<_>>()?;

    let mut state_rhs = Vec::with_capacity(nt);
    for k in 0..nt {
        let r = &grad[k] * (-1.0 / (node_weight(k, nt) * dt));
        let free = free_components(boundary, k, nt, n);
        let rhs = if free.len() == n {
            &frames[k].1 * r
        } else {
            restricted_solve(&frames[k].0, &r, &free)?
        };
        state_rhs.push(rhs);
    }

    let (mu_rhs, mu_c_rhs) = match method {
        Method::ElAghf => dual_fields(ctx, &cells, nt),
        Method::Aghf => (
            vec![DVector::zeros(ctx.nc()); nt],
            vec![DVector::zeros(ctx.constraints.len()); nt],
        ),
    };

    let node_metric = frames.into_iter().map(|(g, _)| g).collect();
    Ok(Evaluation {
        cells,
        action,
        grad,
        state_rhs,
        mu_rhs,
        mu_c_rhs,
        node_metric,
    })
}

/// Solves `G_ff v_f = r_f` on the free components; fixed components get zero.
fn restricted_solve(g: &DMatrix<f64>, r: &DVector<f64>, free: &[usize]) -> Result<DVector<f64>> {
    let n = r.len();
    let mut out = DVector::zeros(n);
    if free.is_empty() {
        return Ok(out);
    }
    let gff = DMatrix::from_fn(free.len(), free.len(), |a, b| g[(free[a], free[b])]);
    let rf = DVector::from_iterator(free.len(), free.iter().map(|&i| r[i]));
    let sol = gff
        .cholesky()
        .ok_or(HeatflowError::SingularFrame { condition: f64::INFINITY })?
        .solve(&rf);
    for (a, &i) in free.iter().enumerate() {
        out[i] = sol[a];
    }
    Ok(out)
}

/// Discrete action of the Lagrangian selected by `method` (`L` with
/// penalties for AGHF, `Lbar^c` with the grid's duals for EL-AGHF).
pub fn action(ctx: &LagrangianContext, grid: &TrajectoryGrid, method: Method) -> Result<f64> {
    let cells = evaluate_cells(ctx, grid, method, Level::Value)?;
    Ok(cells.iter().map(|c| c.value).sum::<f64>() * grid.dt())
}

/// `dx/ds` at every node; fixed boundary components are zero.
pub fn state_flow_rhs(
    ctx: &LagrangianContext,
    grid: &TrajectoryGrid,
    boundary: &BoundarySpec,
    method: Method,
) -> Result<Vec<DVector<f64>>> {
    boundary_dims(boundary, ctx)?;
    Ok(evaluate(ctx, grid, boundary, method)?.state_rhs)
}

/// `dmu/ds` at every node (EL-AGHF dual ascent).
pub fn dual_flow_rhs(ctx: &LagrangianContext, grid: &TrajectoryGrid) -> Result<Vec<DVector<f64>>> {
    Ok(evaluate_duals(ctx, grid)?.0)
}

/// `dmu_c/ds` at every node.
pub fn constraint_dual_flow_rhs(ctx: &LagrangianContext, grid: &TrajectoryGrid) -> Result<Vec<DVector<f64>>> {
    Ok(evaluate_duals(ctx, grid)?.1)
}

fn boundary_dims(boundary: &BoundarySpec, ctx: &LagrangianContext) -> Result<()> {
    if boundary.start.len() != ctx.n() || boundary.end.len() != ctx.n() {
        return Err(HeatflowError::DimensionMismatch(format!(
            "boundary spec has {} components, model has {}",
            boundary.dim(),
            ctx.n()
        )));
    }
    Ok(())
}

/// `(Euler-Lagrange residual, dynamics-gap residual)`, both as max-node
/// sup norms.
///
/// The first is `|d/dt dL/dxdot - dL/dx|` on the free components (the
/// discrete residual the flow drives to zero); the second is
/// `|P_c (xdot_k - F_d(x_k))|` with nodal second-order velocities.
pub fn stationarity_residuals(
    ctx: &LagrangianContext,
    grid: &TrajectoryGrid,
    boundary: &BoundarySpec,
    method: Method,
) -> Result<(f64, f64)> {
    boundary_dims(boundary, ctx)?;
    let ev = evaluate(ctx, grid, boundary, method)?;
    let nt = grid.nt();
    let dt = grid.dt();
    let mut el: f64 = 0.0;
    for k in 0..nt {
        let scale = 1.0 / (node_weight(k, nt) * dt);
        for i in 0..ctx.n() {
            if !boundary.is_fixed(k, nt, i) {
                el = el.max((ev.grad[k][i] * scale).abs());
            }
        }
    }
    let vel = time_derivatives(grid);
    let mut gap: f64 = 0.0;
    for (x, v) in grid.states.iter().zip(&vel) {
        let pe = PointEval::new(ctx, x, v, false)?;
        for i in 0..ctx.nc() {
            gap = gap.max(pe.z[i].abs());
        }
    }
    Ok((el, gap))
}
