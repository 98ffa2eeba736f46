//! Control-affine system abstraction and the small dense linear-algebra
//! utilities shared by the rest of the crate.
//!
//! A system is `xdot = F_d(x) + F(x) u`. The columns of `F` are the admissible
//! directions; the inadmissible frame `F_c` spans a complement of them, and the
//! augmented frame is `Fbar = [F_c | F]` with the inadmissible block first.

use nalgebra::{DMatrix, DVector};

use crate::error::{HeatflowError, Result};

/// Rank tolerance used when a model does not supply its own inadmissible frame.
pub const COMPLEMENT_TOL: f64 = 1e-10;

/// Frames with a 1-norm condition number above this are treated as singular.
pub const MAX_FRAME_CONDITION: f64 = 1e12;

/// Default relative finite-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// A control-affine system `xdot = F_d(x) + F(x) u`.
///
/// Evaluators must be pure and reentrant; the flow evaluates them from
/// several threads at once.
pub trait SystemModel: Send + Sync {
    fn name(&self) -> &str;

    /// State dimension `n`.
    fn state_dim(&self) -> usize;

    /// Control dimension `m`, `1 <= m <= n`.
    fn control_dim(&self) -> usize;

    /// Drift vector field `F_d(x)`.
    fn drift(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Actuation matrix `F(x)` (`n x m`).
    fn actuation(&self, x: &DVector<f64>) -> DMatrix<f64>;

    /// Inadmissible frame `F_c(x)` (`n x (n-m)`). `None` means "compute the
    /// orthogonal complement of `F(x)`".
    fn inadmissible(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    /// Analytic `dF_d/dx` (`n x n`), if available.
    fn drift_jacobian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    /// Analytic `dFbar/dx_i` for each `i`, if available.
    fn frame_jacobian(&self, _x: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        None
    }

    /// Number of inadmissible directions `n - m`.
    fn inadmissible_dim(&self) -> usize {
        self.state_dim() - self.control_dim()
    }
}

fn check_finite_vec(v: &DVector<f64>, what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(HeatflowError::NonFiniteField(what))
    }
}

fn check_finite_mat(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(HeatflowError::NonFiniteField(what))
    }
}

/// Orthonormal basis of the orthogonal complement of `range(F)`.
///
/// Modified Gram-Schmidt: the columns of `F` are orthonormalized first, then
/// the canonical axes `e_1..e_n` are offered in index order and every
/// candidate whose residual norm exceeds `tol` is kept, until `n - m`
/// directions have been found.
pub fn orthogonal_complement(f: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let (n, m) = f.shape();
    if m > n {
        return Err(HeatflowError::DimensionMismatch(format!(
            "actuation matrix is {n}x{m}; need m <= n"
        )));
    }
    check_finite_mat(f, "actuation matrix")?;
    if m == 0 {
        return Ok(DMatrix::identity(n, n));
    }

    let sv = f.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    if smax <= 0.0 || smin <= tol * smax {
        return Err(HeatflowError::RankDeficient {
            ratio: if smax > 0.0 { smin / smax } else { 0.0 },
        });
    }

    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(n);
    for j in 0..m {
        let mut v = f.column(j).into_owned();
        for q in &basis {
            let c = q.dot(&v);
            v.axpy(-c, q, 1.0);
        }
        let norm = v.norm();
        if norm <= tol * smax {
            return Err(HeatflowError::RankDeficient { ratio: norm / smax });
        }
        basis.push(v / norm);
    }

    let needed = n - m;
    let mut complement: Vec<DVector<f64>> = Vec::with_capacity(needed);
    for i in 0..n {
        if complement.len() == needed {
            break;
        }
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        // Two sweeps keep the residual orthogonal to working precision.
        for _ in 0..2 {
            for q in basis.iter().chain(complement.iter()) {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let norm = v.norm();
        if norm > tol {
            complement.push(v / norm);
        }
    }
    if complement.len() < needed {
        return Err(HeatflowError::ComplementIncomplete {
            found: complement.len(),
            needed,
        });
    }
    if complement.is_empty() {
        return Ok(DMatrix::zeros(n, 0));
    }
    Ok(DMatrix::from_columns(&complement))
}

/// Inadmissible frame `F_c(x)`: the model's own, or the orthogonal complement
/// of `F(x)`.
pub fn inadmissible_frame(model: &dyn SystemModel, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    match model.inadmissible(x) {
        Some(fc) => {
            let (n, k) = fc.shape();
            if n != model.state_dim() || k != model.inadmissible_dim() {
                return Err(HeatflowError::DimensionMismatch(format!(
                    "inadmissible frame is {n}x{k}, expected {}x{}",
                    model.state_dim(),
                    model.inadmissible_dim()
                )));
            }
            check_finite_mat(&fc, "inadmissible frame")?;
            Ok(fc)
        }
        None => orthogonal_complement(&model.actuation(x), COMPLEMENT_TOL),
    }
}

/// Augmented frame `Fbar(x) = [F_c(x) | F(x)]`, without the conditioning check.
pub fn assemble_frame(model: &dyn SystemModel, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = model.state_dim();
    let m = model.control_dim();
    let f = model.actuation(x);
    if f.shape() != (n, m) {
        return Err(HeatflowError::DimensionMismatch(format!(
            "actuation is {}x{}, expected {n}x{m}",
            f.nrows(),
            f.ncols()
        )));
    }
    check_finite_mat(&f, "actuation matrix")?;
    let fc = inadmissible_frame(model, x)?;
    let mut fbar = DMatrix::zeros(n, n);
    fbar.columns_mut(0, n - m).copy_from(&fc);
    fbar.columns_mut(n - m, m).copy_from(&f);
    Ok(fbar)
}

/// `Fbar(x)` together with its inverse.
#[derive(Debug, Clone)]
pub struct Frame {
    pub fbar: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
    pub condition: f64,
}

impl Frame {
    pub fn new(fbar: DMatrix<f64>) -> Result<Self> {
        let n = fbar.nrows();
        let inverse = fbar
            .clone()
            .lu()
            .try_inverse()
            .ok_or(HeatflowError::SingularFrame {
                condition: f64::INFINITY,
            })?;
        let condition = one_norm(&fbar) * one_norm(&inverse);
        if !condition.is_finite() || condition > MAX_FRAME_CONDITION {
            return Err(HeatflowError::SingularFrame { condition });
        }
        debug_assert_eq!(inverse.nrows(), n);
        Ok(Self {
            fbar,
            inverse,
            condition,
        })
    }

    pub fn at(model: &dyn SystemModel, x: &DVector<f64>) -> Result<Self> {
        Self::new(assemble_frame(model, x)?)
    }
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Augmented frame with the conditioning check applied.
pub fn augmented_frame(model: &dyn SystemModel, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    Frame::at(model, x).map(|f| f.fbar)
}

/// Minimum-norm least-squares solution of `A v = b` (pseudoinverse applied to `b`).
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let (p, q) = a.shape();
    assert_eq!(p, b.len(), "least_squares: row count mismatch");
    if q == 0 {
        return DVector::zeros(0);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * (p.max(q) as f64) * f64::EPSILON;
    svd.solve(b, eps)
        .expect("SVD computed with both U and V^T")
        .column(0)
        .into_owned()
}

/// Central-difference Jacobian of a vector field, step `h * max(1, |x_i|)`.
///
/// Returns the `n_out x n` matrix with column `i` equal to `d field / d x_i`.
pub fn jacobian_fd<F>(field: F, x: &DVector<f64>, h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = x.len();
    let f0 = field(x);
    check_finite_vec(&f0, "finite-difference field")?;
    let mut jac = DMatrix::zeros(f0.len(), n);
    let mut xp = x.clone();
    for i in 0..n {
        let step = h * x[i].abs().max(1.0);
        xp[i] = x[i] + step;
        let fp = field(&xp);
        xp[i] = x[i] - step;
        let fm = field(&xp);
        xp[i] = x[i];
        check_finite_vec(&fp, "finite-difference field")?;
        check_finite_vec(&fm, "finite-difference field")?;
        jac.set_column(i, &((fp - fm) / (2.0 * step)));
    }
    Ok(jac)
}

/// Central-difference derivatives `d M / d x_i` of a matrix field.
pub fn matrix_jacobian_fd<F>(field: F, x: &DVector<f64>, h: f64) -> Result<Vec<DMatrix<f64>>>
where
    F: Fn(&DVector<f64>) -> Result<DMatrix<f64>>,
{
    let n = x.len();
    let mut xp = x.clone();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let step = h * x[i].abs().max(1.0);
        xp[i] = x[i] + step;
        let fp = field(&xp)?;
        xp[i] = x[i] - step;
        let fm = field(&xp)?;
        xp[i] = x[i];
        check_finite_mat(&fp, "finite-difference field")?;
        check_finite_mat(&fm, "finite-difference field")?;
        out.push((fp - fm) / (2.0 * step));
    }
    Ok(out)
}

/// `dF_d/dx`, analytic when the model provides it.
pub fn drift_jacobian(model: &dyn SystemModel, x: &DVector<f64>, h: f64) -> Result<DMatrix<f64>> {
    match model.drift_jacobian(x) {
        Some(j) => Ok(j),
        None => jacobian_fd(|y| model.drift(y), x, h),
    }
}

/// `dFbar/dx_i` for every `i`, analytic when the model provides it.
pub fn frame_jacobian(
    model: &dyn SystemModel,
    x: &DVector<f64>,
    h: f64,
) -> Result<Vec<DMatrix<f64>>> {
    match model.frame_jacobian(x) {
        Some(j) => Ok(j),
        None => matrix_jacobian_fd(|y| assemble_frame(model, y), x, h),
    }
}
