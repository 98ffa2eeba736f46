//! Riemannian metric `G = Fbar^{-T} D Fbar^{-1}` and the scaling matrix `D`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{HeatflowError, Result};
use crate::system::{Frame, SystemModel};

/// Penalty on the inadmissible directions plus the block sizes of `D`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricParams {
    pub lambda: f64,
    pub n: usize,
    pub m: usize,
}

impl MetricParams {
    pub fn new(lambda: f64, n: usize, m: usize) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(HeatflowError::InvalidLambda(lambda));
        }
        if m == 0 || m > n {
            return Err(HeatflowError::DimensionMismatch(format!(
                "need 1 <= m <= n, got n={n}, m={m}"
            )));
        }
        Ok(Self { lambda, n, m })
    }

    pub fn for_model(model: &dyn SystemModel, lambda: f64) -> Result<Self> {
        Self::new(lambda, model.state_dim(), model.control_dim())
    }

    /// Diagonal of `D`.
    pub fn scaling_diagonal(&self) -> DVector<f64> {
        DVector::from_fn(self.n, |i, _| if i < self.n - self.m { self.lambda } else { 1.0 })
    }
}

/// `D = diag(lambda, .., lambda, 1, .., 1)` with `n - m` leading lambdas.
pub fn scaling_matrix(params: &MetricParams) -> Result<DMatrix<f64>> {
    if !(params.lambda > 0.0) {
        return Err(HeatflowError::InvalidLambda(params.lambda));
    }
    Ok(DMatrix::from_diagonal(&params.scaling_diagonal()))
}

pub(crate) fn metric_from_frame(frame: &Frame, params: &MetricParams) -> DMatrix<f64> {
    let d = params.scaling_diagonal();
    let inv = &frame.inverse;
    let mut scaled = inv.clone();
    for (i, mut row) in scaled.row_iter_mut().enumerate() {
        row *= d[i];
    }
    let g = inv.transpose() * scaled;
    // symmetrize away roundoff
    (&g + g.transpose()) * 0.5
}

pub(crate) fn metric_inverse_from_frame(frame: &Frame, params: &MetricParams) -> DMatrix<f64> {
    let d = params.scaling_diagonal();
    let f = &frame.fbar;
    let mut scaled = f.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col /= d[j];
    }
    let gi = scaled * f.transpose();
    (&gi + gi.transpose()) * 0.5
}

/// Metric tensor `G(x)`.
pub fn metric(model: &dyn SystemModel, x: &DVector<f64>, params: &MetricParams) -> Result<DMatrix<f64>> {
    let frame = Frame::at(model, x)?;
    Ok(metric_from_frame(&frame, params))
}

/// `G(x)^{-1} = Fbar D^{-1} Fbar^T`, formed directly from the frame.
pub fn metric_inverse(
    model: &dyn SystemModel,
    x: &DVector<f64>,
    params: &MetricParams,
) -> Result<DMatrix<f64>> {
    let frame = Frame::at(model, x)?;
    Ok(metric_inverse_from_frame(&frame, params))
}
