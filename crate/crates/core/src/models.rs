//! Benchmark systems and initial-trajectory builders.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{HeatflowError, Result};
use crate::flow::TrajectoryGrid;
use crate::system::SystemModel;

/// Planar unicycle with unit forward speed; the heading rate is the control.
///
/// State `(x, y, theta)`, `F_d = (cos theta, sin theta, 0)`, `F = e_3`.
#[derive(Debug, Clone, Copy, Default)]
pub struct UnicycleConstVel;

pub fn unicycle_const_vel() -> UnicycleConstVel {
    UnicycleConstVel
}

impl SystemModel for UnicycleConstVel {
    fn name(&self) -> &str {
        "unicycle_const_vel"
    }
    fn state_dim(&self) -> usize {
        3
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![x[2].cos(), x[2].sin(), 0.0])
    }
    fn actuation(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0])
    }
    fn inadmissible(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::identity(3, 3).columns(0, 2).into_owned())
    }
    fn drift_jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let mut j = DMatrix::zeros(3, 3);
        j[(0, 2)] = -x[2].sin();
        j[(1, 2)] = x[2].cos();
        Some(j)
    }
    fn frame_jacobian(&self, _x: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        Some(vec![DMatrix::zeros(3, 3); 3])
    }
}

/// Second-order unicycle: state `(x, y, theta, v1, v2)`, controls are the
/// accelerations of `v1` and `v2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct DynamicUnicycle;

pub fn dynamic_unicycle() -> DynamicUnicycle {
    DynamicUnicycle
}

impl SystemModel for DynamicUnicycle {
    fn name(&self) -> &str {
        "dynamic_unicycle"
    }
    fn state_dim(&self) -> usize {
        5
    }
    fn control_dim(&self) -> usize {
        2
    }
    fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        let (th, v1, v2) = (x[2], x[3], x[4]);
        DVector::from_vec(vec![v1 * th.cos(), v1 * th.sin(), v2, 0.0, 0.0])
    }
    fn actuation(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(5, 5).columns(3, 2).into_owned()
    }
    fn inadmissible(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::identity(5, 5).columns(0, 3).into_owned())
    }
    fn drift_jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let (th, v1) = (x[2], x[3]);
        let mut j = DMatrix::zeros(5, 5);
        j[(0, 2)] = -v1 * th.sin();
        j[(1, 2)] = v1 * th.cos();
        j[(0, 3)] = th.cos();
        j[(1, 3)] = th.sin();
        j[(2, 4)] = 1.0;
        Some(j)
    }
    fn frame_jacobian(&self, _x: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        Some(vec![DMatrix::zeros(5, 5); 5])
    }
}

/// Fully actuated `xdot = u` in `n` dimensions.
#[derive(Debug, Clone, Copy)]
pub struct SingleIntegrator {
    pub dim: usize,
}

pub fn single_integrator(dim: usize) -> SingleIntegrator {
    SingleIntegrator { dim }
}

impl SystemModel for SingleIntegrator {
    fn name(&self) -> &str {
        "single_integrator"
    }
    fn state_dim(&self) -> usize {
        self.dim
    }
    fn control_dim(&self) -> usize {
        self.dim
    }
    fn drift(&self, _x: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(self.dim)
    }
    fn actuation(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim)
    }
    fn drift_jacobian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::zeros(self.dim, self.dim))
    }
    fn frame_jacobian(&self, _x: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        Some(vec![DMatrix::zeros(self.dim, self.dim); self.dim])
    }
}

/// Link masses, lengths and centroidal inertias of the planar three-link diver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiverParams {
    pub masses: [f64; 3],
    pub lengths: [f64; 3],
    pub inertias: [f64; 3],
}

impl Default for DiverParams {
    fn default() -> Self {
        Self {
            masses: [1.0; 3],
            lengths: [1.0; 3],
            inertias: [1.0; 3],
        }
    }
}

impl DiverParams {
    pub fn validate(&self) -> Result<()> {
        let all = self.masses.iter().chain(&self.lengths).chain(&self.inertias);
        if all.clone().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(HeatflowError::InvalidConfig(
                "diver masses, lengths and inertias must be positive".into(),
            ))
        }
    }
}

/// Planar three-link chain floating in the air, written in reduced
/// coordinates `q = (theta_0, q_1, q_2)` about the centre of mass.
///
/// State is `(q, qdot)`. Link `i` has absolute angle `phi = S q` with `S`
/// lower-triangular ones; link centres of mass sit at mid-link. The centre of
/// mass is factored out, so the kinetic energy is `1/2 qdot^T D(q) qdot` and
/// `theta_0` is cyclic, which makes `(D qdot)_0` (the angular momentum about
/// the centre of mass) a conserved quantity of the unforced motion.
#[derive(Debug, Clone)]
pub struct Diver3 {
    params: DiverParams,
    /// `sum_i m_i a_ij a_ik`, the translational coupling between links `j`, `k`.
    coupling: Matrix3<f64>,
}

/// Maps reduced coordinates to absolute link angles.
const ANGLE_MAP: Matrix3<f64> = Matrix3::new(1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0);

pub fn diver3(params: DiverParams) -> Result<Diver3> {
    params.validate()?;
    let m = params.masses;
    let l = params.lengths;
    let total: f64 = m.iter().sum();
    // position of link COM i relative to link-1 COM, as sum_j b_ij e(phi_j)
    let b = Matrix3::new(
        0.0, 0.0, 0.0,
        l[0] / 2.0, l[1] / 2.0, 0.0,
        l[0] / 2.0, l[1], l[2] / 2.0,
    );
    let mut beta = Vector3::zeros();
    for (i, mi) in m.iter().enumerate() {
        beta += b.row(i).transpose() * (mi / total);
    }
    let mut coupling = Matrix3::zeros();
    for (i, mi) in m.iter().enumerate() {
        let a = b.row(i).transpose() - beta;
        coupling += a * a.transpose() * *mi;
    }
    Ok(Diver3 { params, coupling })
}

impl Diver3 {
    pub fn params(&self) -> &DiverParams {
        &self.params
    }

    fn link_angles(q: &Vector3<f64>) -> Vector3<f64> {
        ANGLE_MAP * q
    }

    /// Inertia matrix in link-angle coordinates.
    fn angle_inertia(&self, phi: &Vector3<f64>) -> Matrix3<f64> {
        Matrix3::from_fn(|j, k| {
            let mut v = self.coupling[(j, k)] * (phi[j] - phi[k]).cos();
            if j == k {
                v += self.params.inertias[j];
            }
            v
        })
    }

    /// Reduced inertia matrix `D(q)`.
    pub fn inertia(&self, q: &Vector3<f64>) -> Matrix3<f64> {
        let mphi = self.angle_inertia(&Self::link_angles(q));
        ANGLE_MAP.transpose() * mphi * ANGLE_MAP
    }

    /// `dD/dq_l` for `l = 0, 1, 2`.
    pub fn inertia_derivatives(&self, q: &Vector3<f64>) -> [Matrix3<f64>; 3] {
        let phi = Self::link_angles(q);
        // dM_phi/dphi_p
        let dm: [Matrix3<f64>; 3] = std::array::from_fn(|p| {
            Matrix3::from_fn(|j, k| {
                let sel = (p == j) as i32 as f64 - (p == k) as i32 as f64;
                -self.coupling[(j, k)] * (phi[j] - phi[k]).sin() * sel
            })
        });
        std::array::from_fn(|l| {
            let mut acc = Matrix3::zeros();
            for (p, dmp) in dm.iter().enumerate() {
                acc += dmp * ANGLE_MAP[(p, l)];
            }
            ANGLE_MAP.transpose() * acc * ANGLE_MAP
        })
    }

    /// Coriolis matrix from the Christoffel symbols of `D`.
    pub fn coriolis(&self, q: &Vector3<f64>, qd: &Vector3<f64>) -> Matrix3<f64> {
        let dd = self.inertia_derivatives(q);
        Matrix3::from_fn(|k, j| {
            (0..3)
                .map(|i| 0.5 * (dd[i][(k, j)] + dd[j][(k, i)] - dd[k][(i, j)]) * qd[i])
                .sum()
        })
    }

    fn split(x: &DVector<f64>) -> (Vector3<f64>, Vector3<f64>) {
        (
            Vector3::new(x[0], x[1], x[2]),
            Vector3::new(x[3], x[4], x[5]),
        )
    }

    fn inertia_inverse(&self, q: &Vector3<f64>) -> Matrix3<f64> {
        // D is SPD for positive parameters
        self.inertia(q)
            .cholesky()
            .expect("diver inertia is positive definite")
            .inverse()
    }

    /// Angular momentum about the centre of mass, `(D(q) qdot)_0`.
    pub fn angular_momentum(&self, x: &DVector<f64>) -> f64 {
        let (q, qd) = Self::split(x);
        (self.inertia(&q) * qd)[0]
    }
}

impl SystemModel for Diver3 {
    fn name(&self) -> &str {
        "diver3"
    }
    fn state_dim(&self) -> usize {
        6
    }
    fn control_dim(&self) -> usize {
        2
    }
    fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        let (q, qd) = Self::split(x);
        let acc = -self.inertia_inverse(&q) * (self.coriolis(&q, &qd) * qd);
        DVector::from_vec(vec![qd[0], qd[1], qd[2], acc[0], acc[1], acc[2]])
    }
    fn actuation(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let (q, _) = Self::split(x);
        let dinv = self.inertia_inverse(&q);
        let mut f = DMatrix::zeros(6, 2);
        for r in 0..3 {
            f[(3 + r, 0)] = dinv[(r, 1)];
            f[(3 + r, 1)] = dinv[(r, 2)];
        }
        f
    }
    /// Inadmissible block of `Fbar = blockdiag(I_3, D^{-1})`: the three
    /// kinematic axes and the unactuated column `D^{-1} e_0`.
    fn inadmissible(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let (q, _) = Self::split(x);
        let dinv = self.inertia_inverse(&q);
        let mut fc = DMatrix::zeros(6, 4);
        for r in 0..3 {
            fc[(r, r)] = 1.0;
            fc[(3 + r, 3)] = dinv[(r, 0)];
        }
        Some(fc)
    }
    fn frame_jacobian(&self, x: &DVector<f64>) -> Option<Vec<DMatrix<f64>>> {
        let (q, _) = Self::split(x);
        let dinv = self.inertia_inverse(&q);
        let dd = self.inertia_derivatives(&q);
        let mut out = vec![DMatrix::zeros(6, 6); 6];
        for (l, ddl) in dd.iter().enumerate() {
            let d = -dinv * ddl * dinv;
            out[l].view_mut((3, 3), (3, 3)).copy_from(&d);
        }
        Some(out)
    }
}

/// Shape of the initial trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    /// Componentwise linear interpolation from `x0` to `xf`.
    Linear,
    /// Linear, except the first component is `1e-4 sin(pi t / T)`.
    LinearWithSineX,
    /// First component interpolated, all others zero.
    ThetaOnly,
}

/// Initial trajectory with zero duals.
pub fn initial_grid(
    kind: InitKind,
    x0: &DVector<f64>,
    xf: &DVector<f64>,
    horizon: f64,
    nt: usize,
    n_mu: usize,
    n_constraints: usize,
) -> Result<TrajectoryGrid> {
    if x0.len() != xf.len() {
        return Err(HeatflowError::DimensionMismatch(format!(
            "x0 has length {}, xf has length {}",
            x0.len(),
            xf.len()
        )));
    }
    if x0.is_empty() {
        return Err(HeatflowError::DimensionMismatch("empty state".into()));
    }
    let mut grid = TrajectoryGrid::zeros(horizon, nt, x0.len(), n_mu, n_constraints)?;
    for k in 0..nt {
        let t = grid.time(k);
        let a = t / horizon;
        let lin = x0 * (1.0 - a) + xf * a;
        grid.states[k] = match kind {
            InitKind::Linear => lin,
            InitKind::LinearWithSineX => {
                let mut v = lin;
                v[0] = 1e-4 * (std::f64::consts::PI * a).sin();
                v
            }
            InitKind::ThetaOnly => {
                let mut v = DVector::zeros(x0.len());
                v[0] = lin[0];
                v
            }
        };
    }
    Ok(grid)
}
