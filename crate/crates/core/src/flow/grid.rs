use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{HeatflowError, Result};

/// Minimum number of time nodes.
pub const MIN_NODES: usize = 5;

/// State and dual trajectories sampled on a uniform grid over `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryGrid {
    pub horizon: f64,
    /// `x(t_k)`, one entry per node.
    pub states: Vec<DVector<f64>>,
    /// Dynamics duals `mu(t_k)`, length `n - m` each.
    pub mu: Vec<DVector<f64>>,
    /// Constraint duals `mu_c(t_k)`, one per kinematic constraint.
    pub mu_c: Vec<DVector<f64>>,
}

impl TrajectoryGrid {
    pub fn zeros(horizon: f64, nt: usize, n: usize, n_mu: usize, n_constraints: usize) -> Result<Self> {
        if nt < MIN_NODES {
            return Err(HeatflowError::InvalidConfig(format!(
                "need at least {MIN_NODES} time nodes, got {nt}"
            )));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(HeatflowError::InvalidConfig(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        Ok(Self {
            horizon,
            states: vec![DVector::zeros(n); nt],
            mu: vec![DVector::zeros(n_mu); nt],
            mu_c: vec![DVector::zeros(n_constraints); nt],
        })
    }

    /// Builds a grid from state samples with zero duals.
    pub fn from_states(
        horizon: f64,
        states: Vec<DVector<f64>>,
        n_mu: usize,
        n_constraints: usize,
    ) -> Result<Self> {
        let nt = states.len();
        let n = states.first().map_or(0, |s| s.len());
        let mut g = Self::zeros(horizon, nt, n, n_mu, n_constraints)?;
        if states.iter().any(|s| s.len() != n) {
            return Err(HeatflowError::DimensionMismatch("ragged state samples".into()));
        }
        g.states = states;
        Ok(g)
    }

    pub fn nt(&self) -> usize {
        self.states.len()
    }

    pub fn state_dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn dt(&self) -> f64 {
        self.horizon / (self.nt() - 1) as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k + 1 == self.nt() {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.nt()).map(|k| self.time(k)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.states
            .iter()
            .chain(&self.mu)
            .chain(&self.mu_c)
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Finite differences of nodal samples: second-order central in the interior,
/// third-order one-sided four-point at both ends.
pub fn differentiate(values: &[DVector<f64>], dt: f64) -> Vec<DVector<f64>> {
    let nt = values.len();
    assert!(nt >= 4, "need at least four samples to differentiate");
    let mut out = Vec::with_capacity(nt);
    out.push(
        (&values[1] * 18.0 - &values[0] * 11.0 - &values[2] * 9.0 + &values[3] * 2.0) / (6.0 * dt),
    );
    for k in 1..nt - 1 {
        out.push((&values[k + 1] - &values[k - 1]) / (2.0 * dt));
    }
    out.push(
        (&values[nt - 1] * 11.0 - &values[nt - 2] * 18.0 + &values[nt - 3] * 9.0 - &values[nt - 4] * 2.0)
            / (6.0 * dt),
    );
    out
}

/// Nodal velocities `xdot(t_k)`.
pub fn time_derivatives(grid: &TrajectoryGrid) -> Vec<DVector<f64>> {
    differentiate(&grid.states, grid.dt())
}

/// Boundary treatment of one state component at one end of the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BoundaryValue {
    Fixed(f64),
    /// Natural (zero-flux) boundary condition.
    Free,
}

impl BoundaryValue {
    pub fn is_fixed(&self) -> bool {
        matches!(self, BoundaryValue::Fixed(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum End {
    Start,
    Finish,
}

/// Per-component boundary conditions at `t = 0` and `t = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySpec {
    pub start: Vec<BoundaryValue>,
    pub end: Vec<BoundaryValue>,
}

impl BoundarySpec {
    /// Every component fixed at both ends.
    pub fn fixed(x0: &DVector<f64>, xf: &DVector<f64>) -> Self {
        Self {
            start: x0.iter().map(|&v| BoundaryValue::Fixed(v)).collect(),
            end: xf.iter().map(|&v| BoundaryValue::Fixed(v)).collect(),
        }
    }

    /// Fixed values with per-component free masks (`true` = free).
    pub fn with_free(
        x0: &DVector<f64>,
        xf: &DVector<f64>,
        free_start: &[bool],
        free_end: &[bool],
    ) -> Result<Self> {
        let n = x0.len();
        if xf.len() != n || free_start.len() != n || free_end.len() != n {
            return Err(HeatflowError::DimensionMismatch(format!(
                "boundary vectors/masks must all have length {n}"
            )));
        }
        let pick = |v: f64, free: bool| {
            if free {
                BoundaryValue::Free
            } else {
                BoundaryValue::Fixed(v)
            }
        };
        Ok(Self {
            start: x0.iter().zip(free_start).map(|(&v, &f)| pick(v, f)).collect(),
            end: xf.iter().zip(free_end).map(|(&v, &f)| pick(v, f)).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.start.len()
    }

    pub fn side(&self, end: End) -> &[BoundaryValue] {
        match end {
            End::Start => &self.start,
            End::Finish => &self.end,
        }
    }

    /// Boundary values applying at node `k` of an `nt`-node grid, if any.
    pub fn at_node(&self, k: usize, nt: usize) -> Option<&[BoundaryValue]> {
        if k == 0 {
            Some(&self.start)
        } else if k + 1 == nt {
            Some(&self.end)
        } else {
            None
        }
    }

    pub fn is_fixed(&self, k: usize, nt: usize, component: usize) -> bool {
        self.at_node(k, nt)
            .is_some_and(|side| side[component].is_fixed())
    }

    /// Errors if any fixed component of `grid` deviates from its prescribed value.
    pub fn check(&self, grid: &TrajectoryGrid) -> Result<()> {
        let n = grid.state_dim();
        if self.start.len() != n || self.end.len() != n {
            return Err(HeatflowError::DimensionMismatch(format!(
                "boundary spec has {} components, grid has {n}",
                self.start.len()
            )));
        }
        let nt = grid.nt();
        for (end, label, k) in [(End::Start, "t=0", 0), (End::Finish, "t=T", nt - 1)] {
            for (i, b) in self.side(end).iter().enumerate() {
                if let BoundaryValue::Fixed(v) = *b {
                    let actual = grid.states[k][i];
                    if (actual - v).abs() > 1e-12 * v.abs().max(1.0) {
                        return Err(HeatflowError::InitInfeasibleBoundary {
                            end: label,
                            component: i,
                            expected: v,
                            actual,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Writes the fixed values into `grid`.
    pub fn clamp(&self, grid: &mut TrajectoryGrid) {
        let nt = grid.nt();
        for (end, k) in [(End::Start, 0), (End::Finish, nt - 1)] {
            for (i, b) in self.side(end).iter().enumerate() {
                if let BoundaryValue::Fixed(v) = *b {
                    grid.states[k][i] = v;
                }
            }
        }
    }

    /// Prescribed terminal values and the mask of terminally fixed components.
    pub fn terminal_fixed(&self) -> Vec<Option<f64>> {
        self.end
            .iter()
            .map(|b| match *b {
                BoundaryValue::Fixed(v) => Some(v),
                BoundaryValue::Free => None,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid_from(f: impl Fn(f64) -> f64, horizon: f64, nt: usize) -> TrajectoryGrid {
        let dt = horizon / (nt - 1) as f64;
        let states = (0..nt).map(|k| DVector::from_vec(vec![f(k as f64 * dt)])).collect();
        TrajectoryGrid::from_states(horizon, states, 0, 0).unwrap()
    }

    #[test]
    fn stencil_exact_on_linear_and_quadratic() {
        let g = grid_from(|t| 3.0 * t - 1.0, 2.0, 11);
        for d in time_derivatives(&g) {
            assert_relative_eq!(d[0], 3.0, epsilon = 1e-12);
        }
        let g = grid_from(|t| t * t - 0.5 * t, 2.0, 11);
        for (k, d) in time_derivatives(&g).iter().enumerate() {
            assert_relative_eq!(d[0], 2.0 * g.time(k) - 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn stencil_second_order_on_sine() {
        let pi = std::f64::consts::PI;
        let g = grid_from(|t| (pi * t).sin(), 1.0, 101);
        let err = time_derivatives(&g)
            .iter()
            .enumerate()
            .map(|(k, d)| (d[0] - pi * (pi * g.time(k)).cos()).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-3, "max error {err}");
    }

    #[test]
    fn rejects_short_grids() {
        assert!(TrajectoryGrid::zeros(1.0, 4, 1, 0, 0).is_err());
        assert!(TrajectoryGrid::zeros(0.0, 10, 1, 0, 0).is_err());
    }

    #[test]
    fn boundary_check_and_clamp() {
        let x0 = DVector::from_vec(vec![0.0, 1.0]);
        let xf = DVector::from_vec(vec![2.0, 3.0]);
        let spec = BoundarySpec::with_free(&x0, &xf, &[false, true], &[true, false]).unwrap();
        let mut g = TrajectoryGrid::zeros(1.0, 6, 2, 0, 0).unwrap();
        assert!(matches!(
            spec.check(&g),
            Err(HeatflowError::InitInfeasibleBoundary { component: 1, .. })
        ));
        spec.clamp(&mut g);
        spec.check(&g).unwrap();
        assert_eq!(g.states[0][1], 0.0);
        assert_eq!(g.states[5][0], 0.0);
        assert!(spec.is_fixed(0, 6, 0));
        assert!(!spec.is_fixed(0, 6, 1));
        assert!(!spec.is_fixed(3, 6, 0));
        assert!(BoundarySpec::with_free(&x0, &xf, &[false], &[true, false]).is_err());
    }
}
