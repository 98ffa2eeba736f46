//! Plain, extended and constraint-augmented Lagrangians with their analytic
//! partial derivatives.
//!
//! All quantities are computed through the frame coordinates of the dynamics
//! gap, `z = Fbar(x)^{-1} (xdot - F_d(x))`. With `D` the scaling matrix,
//!
//! ```text
//! L      = z^T D z
//! Lbar   = L + 2 lambda mu^T z_c
//! Lbar^c = Lbar + sum_j lambda_c ((h_j + mu_c_j)^2 - mu_c_j^2) S(h_j)
//! ```
//!
//! where `z_c` is the inadmissible block of `z`. The row block
//! `P_c = [I 0] Fbar^{-1}` plays the role of `F_c^+`; it coincides with the
//! pseudoinverse whenever `F_c` is orthogonal to `F`, and remains the correct
//! gap operator for frames (like the diver's) where it is not.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{HeatflowError, Result};
use crate::geometry::{metric_from_frame, MetricParams};
use crate::system::{self, Frame, SystemModel};

/// A scalar kinematic constraint `h(x) <= 0` with its analytic gradient.
pub trait KinematicConstraint: Send + Sync + fmt::Debug {
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
}

/// One side of a box bound on a single state component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoxBound {
    /// `h = lower - x_i`
    Lower { index: usize, bound: f64 },
    /// `h = x_i - upper`
    Upper { index: usize, bound: f64 },
}

impl BoxBound {
    pub fn index(&self) -> usize {
        match *self {
            BoxBound::Lower { index, .. } | BoxBound::Upper { index, .. } => index,
        }
    }
}

impl KinematicConstraint for BoxBound {
    fn value(&self, x: &DVector<f64>) -> f64 {
        match *self {
            BoxBound::Lower { index, bound } => bound - x[index],
            BoxBound::Upper { index, bound } => x[index] - bound,
        }
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(x.len());
        match *self {
            BoxBound::Lower { index, .. } => g[index] = -1.0,
            BoxBound::Upper { index, .. } => g[index] = 1.0,
        }
        g
    }
}

/// Smooth Heaviside `H(h) = 1 / (1 + exp(-k h))`.
pub fn heaviside(h: f64, sharpness: f64) -> f64 {
    1.0 / (1.0 + (-sharpness * h).exp())
}

/// Switching function. `S = H` on both sides of the constraint boundary.
pub fn switching(h: f64, sharpness: f64) -> f64 {
    heaviside(h, sharpness)
}

/// `dS/dh = k H (1 - H)`.
pub fn switching_derivative(h: f64, sharpness: f64) -> f64 {
    let s = heaviside(h, sharpness);
    sharpness * s * (1.0 - s)
}

/// Kinematic constraints with their shared penalty and sharpness.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    pub constraints: Vec<Arc<dyn KinematicConstraint>>,
    pub lambda_c: f64,
    pub sharpness: f64,
}

impl Default for ConstraintSet {
    fn default() -> Self {
        Self::empty()
    }
}

impl ConstraintSet {
    pub fn empty() -> Self {
        Self {
            constraints: Vec::new(),
            lambda_c: 1.0,
            sharpness: 100.0,
        }
    }

    pub fn new(
        constraints: Vec<Arc<dyn KinematicConstraint>>,
        lambda_c: f64,
        sharpness: f64,
    ) -> Result<Self> {
        if !(lambda_c > 0.0) {
            return Err(HeatflowError::InvalidConfig(format!(
                "constraint penalty must be positive, got {lambda_c}"
            )));
        }
        if !(sharpness > 0.0) {
            return Err(HeatflowError::InvalidConfig(format!(
                "heaviside sharpness must be positive, got {sharpness}"
            )));
        }
        Ok(Self {
            constraints,
            lambda_c,
            sharpness,
        })
    }

    /// Lower and upper bound on component `index`.
    pub fn push_box(&mut self, index: usize, lower: f64, upper: f64) {
        self.constraints.push(Arc::new(BoxBound::Lower { index, bound: lower }));
        self.constraints.push(Arc::new(BoxBound::Upper { index, bound: upper }));
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn values(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.constraints.iter().map(|c| c.value(x)))
    }
}

/// Dual variables at a single time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub mu: DVector<f64>,
    pub mu_c: DVector<f64>,
}

impl DualState {
    pub fn zeros(inadmissible: usize, constraints: usize) -> Self {
        Self {
            mu: DVector::zeros(inadmissible),
            mu_c: DVector::zeros(constraints),
        }
    }
}

/// Everything needed to evaluate `Lbar^c` at a point.
#[derive(Clone)]
pub struct LagrangianContext {
    pub model: Arc<dyn SystemModel>,
    pub params: MetricParams,
    pub constraints: ConstraintSet,
    pub fd_step: f64,
}

impl fmt::Debug for LagrangianContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LagrangianContext")
            .field("model", &self.model.name())
            .field("params", &self.params)
            .field("constraints", &self.constraints)
            .finish()
    }
}

impl LagrangianContext {
    pub fn new(model: Arc<dyn SystemModel>, lambda: f64, constraints: ConstraintSet) -> Result<Self> {
        let params = MetricParams::for_model(model.as_ref(), lambda)?;
        let ctx = Self {
            model,
            params,
            constraints,
            fd_step: system::DEFAULT_FD_STEP,
        };
        Ok(ctx)
    }

    pub fn unconstrained(model: Arc<dyn SystemModel>, lambda: f64) -> Result<Self> {
        Self::new(model, lambda, ConstraintSet::empty())
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn m(&self) -> usize {
        self.params.m
    }

    /// `n - m`
    pub fn nc(&self) -> usize {
        self.params.n - self.params.m
    }

    pub fn lambda(&self) -> f64 {
        self.params.lambda
    }

    fn check_dims(&self, x: &DVector<f64>, xdot: &DVector<f64>, duals: Option<&DualState>) -> Result<()> {
        let n = self.n();
        if x.len() != n || xdot.len() != n {
            return Err(HeatflowError::DimensionMismatch(format!(
                "state/velocity length {}/{}, expected {n}",
                x.len(),
                xdot.len()
            )));
        }
        if let Some(d) = duals {
            if d.mu.len() != self.nc() {
                return Err(HeatflowError::DimensionMismatch(format!(
                    "mu has length {}, expected {}",
                    d.mu.len(),
                    self.nc()
                )));
            }
            if d.mu_c.len() != self.constraints.len() {
                return Err(HeatflowError::DimensionMismatch(format!(
                    "mu_c has length {}, expected {}",
                    d.mu_c.len(),
                    self.constraints.len()
                )));
            }
        }
        Ok(())
    }
}

/// Frame, gap and (optionally) gap Jacobian at one `(x, xdot)`.
pub(crate) struct PointEval {
    pub frame: Frame,
    /// `z = Fbar^{-1} (xdot - F_d)`
    pub z: DVector<f64>,
    /// `dz/dx`, present when requested.
    pub dz_dx: Option<DMatrix<f64>>,
}

impl PointEval {
    pub fn new(ctx: &LagrangianContext, x: &DVector<f64>, xdot: &DVector<f64>, with_jacobian: bool) -> Result<Self> {
        let model = ctx.model.as_ref();
        let frame = Frame::at(model, x)?;
        let gap = xdot - model.drift(x);
        if gap.iter().any(|v| !v.is_finite()) {
            return Err(HeatflowError::NonFiniteField("drift"));
        }
        let z = &frame.inverse * &gap;
        let dz_dx = if with_jacobian {
            let jd = system::drift_jacobian(model, x, ctx.fd_step)?;
            let jf = system::frame_jacobian(model, x, ctx.fd_step)?;
            let n = ctx.n();
            // d(Fbar^{-1} r)/dx_i = -Fbar^{-1} (dFbar/dx_i) z - Fbar^{-1} dF_d/dx_i
            let mut inner = -jd;
            for (i, dfi) in jf.iter().enumerate() {
                let col = dfi * &z;
                let mut c = inner.column_mut(i);
                c -= col;
            }
            let dz = &frame.inverse * inner;
            debug_assert_eq!(dz.shape(), (n, n));
            Some(dz)
        } else {
            None
        };
        Ok(Self { frame, z, dz_dx })
    }

    /// `dLbar/dz = 2 D z + 2 lambda [mu; 0]`
    pub fn dl_dz(&self, ctx: &LagrangianContext, mu: Option<&DVector<f64>>) -> DVector<f64> {
        let d = ctx.params.scaling_diagonal();
        let mut w = self.z.component_mul(&d) * 2.0;
        if let Some(mu) = mu {
            let lam = ctx.lambda();
            for i in 0..ctx.nc() {
                w[i] += 2.0 * lam * mu[i];
            }
        }
        w
    }

    pub fn plain_value(&self, ctx: &LagrangianContext) -> f64 {
        let d = ctx.params.scaling_diagonal();
        self.z.iter().zip(d.iter()).map(|(z, d)| d * z * z).sum()
    }

    pub fn extended_value(&self, ctx: &LagrangianContext, mu: &DVector<f64>) -> f64 {
        let coupling: f64 = (0..ctx.nc()).map(|i| mu[i] * self.z[i]).sum();
        self.plain_value(ctx) + 2.0 * ctx.lambda() * coupling
    }
}

/// Penalty contribution of a single constraint with value `h` and dual `mu_c_j`.
pub fn penalty_term(h: f64, mu_c_j: f64, constraints: &ConstraintSet) -> f64 {
    let s = switching(h, constraints.sharpness);
    constraints.lambda_c * ((h + mu_c_j).powi(2) - mu_c_j * mu_c_j) * s
}

fn penalty_sum(ctx: &LagrangianContext, x: &DVector<f64>, mu_c: &DVector<f64>) -> f64 {
    ctx.constraints
        .constraints
        .iter()
        .zip(mu_c.iter())
        .map(|(c, &m)| penalty_term(c.value(x), m, &ctx.constraints))
        .sum()
}

/// `d/dx` of the penalty sum.
pub(crate) fn penalty_gradient(ctx: &LagrangianContext, x: &DVector<f64>, mu_c: &DVector<f64>) -> DVector<f64> {
    let cs = &ctx.constraints;
    let mut g = DVector::zeros(x.len());
    for (c, &m) in cs.constraints.iter().zip(mu_c.iter()) {
        let h = c.value(x);
        let s = switching(h, cs.sharpness);
        let ds = switching_derivative(h, cs.sharpness);
        let coef = cs.lambda_c * ((2.0 * h + 2.0 * m) * s + (h * h + 2.0 * h * m) * ds);
        if coef != 0.0 {
            g.axpy(coef, &c.gradient(x), 1.0);
        }
    }
    g
}

/// Second derivative of [`penalty_term`] in `h`, clamped at zero.
pub(crate) fn penalty_curvature(h: f64, mu_c_j: f64, constraints: &ConstraintSet) -> f64 {
    let k = constraints.sharpness;
    let s = switching(h, k);
    let d1 = switching_derivative(h, k);
    let d2 = k * d1 * (1.0 - 2.0 * s);
    let c = 2.0 * s + 4.0 * (h + mu_c_j) * d1 + (h * h + 2.0 * h * mu_c_j) * d2;
    (constraints.lambda_c * c).max(0.0)
}

/// `L = (xdot - F_d)^T G (xdot - F_d)`.
pub fn lagrangian(ctx: &LagrangianContext, x: &DVector<f64>, xdot: &DVector<f64>) -> Result<f64> {
    ctx.check_dims(x, xdot, None)?;
    Ok(PointEval::new(ctx, x, xdot, false)?.plain_value(ctx))
}

/// `Lbar = L + 2 lambda mu^T F_c^+ (xdot - F_d)`.
pub fn extended_lagrangian(
    ctx: &LagrangianContext,
    x: &DVector<f64>,
    xdot: &DVector<f64>,
    mu: &DVector<f64>,
) -> Result<f64> {
    ctx.check_dims(x, xdot, None)?;
    if mu.len() != ctx.nc() {
        return Err(HeatflowError::DimensionMismatch(format!(
            "mu has length {}, expected {}",
            mu.len(),
            ctx.nc()
        )));
    }
    Ok(PointEval::new(ctx, x, xdot, false)?.extended_value(ctx, mu))
}

/// The completed-square form `(r + F_c mu)^T G (r + F_c mu) - lambda mu^T mu`
/// with `r = xdot - F_d`, evaluated directly from `G` and `F_c`.
pub fn extended_lagrangian_completed_square(
    ctx: &LagrangianContext,
    x: &DVector<f64>,
    xdot: &DVector<f64>,
    mu: &DVector<f64>,
) -> Result<f64> {
    ctx.check_dims(x, xdot, None)?;
    let model = ctx.model.as_ref();
    let frame = Frame::at(model, x)?;
    let g = metric_from_frame(&frame, &ctx.params);
    let fc = frame.fbar.columns(0, ctx.nc()).into_owned();
    let v = xdot - model.drift(x) + fc * mu;
    Ok((v.transpose() * g * &v)[(0, 0)] - ctx.lambda() * mu.dot(mu))
}

/// `Lbar^c = Lbar + sum_j penalty_term(h_j(x), mu_c_j)`.
pub fn constrained_extended_lagrangian(
    ctx: &LagrangianContext,
    x: &DVector<f64>,
    xdot: &DVector<f64>,
    duals: &DualState,
) -> Result<f64> {
    ctx.check_dims(x, xdot, Some(duals))?;
    let pe = PointEval::new(ctx, x, xdot, false)?;
    Ok(pe.extended_value(ctx, &duals.mu) + penalty_sum(ctx, x, &duals.mu_c))
}

/// Gap operator `P_c = [I_{n-m} 0] Fbar^{-1}` (equals `F_c^+` for `F_c` orthogonal to `F`).
pub fn inadmissible_projector(ctx: &LagrangianContext, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let frame = Frame::at(ctx.model.as_ref(), x)?;
    Ok(frame.inverse.rows(0, ctx.nc()).into_owned())
}

/// `dLbar^c/dxdot = 2 G (xdot - F_d) + 2 lambda P_c^T mu`.
pub fn grad_xdot(
    ctx: &LagrangianContext,
    x: &DVector<f64>,
    xdot: &DVector<f64>,
    duals: &DualState,
) -> Result<DVector<f64>> {
    ctx.check_dims(x, xdot, Some(duals))?;
    let pe = PointEval::new(ctx, x, xdot, false)?;
    Ok(pe.frame.inverse.tr_mul(&pe.dl_dz(ctx, Some(&duals.mu))))
}

/// `dLbar^c/dx`, including the frame, drift and constraint chain-rule terms.
pub fn grad_x(
    ctx: &LagrangianContext,
    x: &DVector<f64>,
    xdot: &DVector<f64>,
    duals: &DualState,
) -> Result<DVector<f64>> {
    ctx.check_dims(x, xdot, Some(duals))?;
    let pe = PointEval::new(ctx, x, xdot, true)?;
    let w = pe.dl_dz(ctx, Some(&duals.mu));
    let dz = pe.dz_dx.as_ref().expect("jacobian requested");
    Ok(dz.tr_mul(&w) + penalty_gradient(ctx, x, &duals.mu_c))
}

/// `dLbar^c/dmu = 2 lambda P_c (xdot - F_d)`.
pub fn grad_mu(
    ctx: &LagrangianContext,
    x: &DVector<f64>,
    xdot: &DVector<f64>,
    duals: &DualState,
) -> Result<DVector<f64>> {
    ctx.check_dims(x, xdot, Some(duals))?;
    let pe = PointEval::new(ctx, x, xdot, false)?;
    Ok(pe.z.rows(0, ctx.nc()) * (2.0 * ctx.lambda()))
}

/// `dLbar^c/dmu_c_j = 2 lambda_c h_j S(h_j)`.
pub fn grad_mu_c(ctx: &LagrangianContext, x: &DVector<f64>, duals: &DualState) -> Result<DVector<f64>> {
    if duals.mu_c.len() != ctx.constraints.len() {
        return Err(HeatflowError::DimensionMismatch(format!(
            "mu_c has length {}, expected {}",
            duals.mu_c.len(),
            ctx.constraints.len()
        )));
    }
    let cs = &ctx.constraints;
    Ok(DVector::from_iterator(
        cs.len(),
        cs.constraints.iter().map(|c| {
            let h = c.value(x);
            2.0 * cs.lambda_c * h * switching(h, cs.sharpness)
        }),
    ))
}
