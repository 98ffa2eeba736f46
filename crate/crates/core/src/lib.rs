//! Trajectory optimization for control-affine systems by geometric heat flow.
//!
//! A trajectory is deformed along an artificial time `s` so that it descends
//! an action which penalizes motion along unactuated directions. The
//! extended variant carries dual trajectories that drive the dynamics gap to
//! zero at finite penalty, and supports smooth kinematic inequality constraints.
//!
//! ```no_run
//! use std::sync::Arc;
//! use heatflow::prelude::*;
//!
//! let model = Arc::new(unicycle_const_vel());
//! let ctx = LagrangianContext::unconstrained(model.clone(), 10.0).unwrap();
//! let x0 = nalgebra::DVector::from_vec(vec![0.0, 0.0, 0.0]);
//! let xf = nalgebra::DVector::from_vec(vec![0.0, 1.0, 0.0]);
//! let init = initial_grid(InitKind::Linear, &x0, &xf, 5.0, 101, 2, 0).unwrap();
//! let boundary = BoundarySpec::fixed(&x0, &xf);
//! let (grid, report) = solve(&ctx, &init, &boundary, &SolverConfig::default()).unwrap();
//! let check = verify(model.as_ref(), &grid, &boundary, &ctx.constraints, None).unwrap();
//! println!("converged={} e(T)={:.2e}", report.converged, check.e_t);
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod lagrangian;
pub mod models;
pub mod system;
pub mod verify;

pub use error::{HeatflowError, Result};

pub mod prelude {
    pub use crate::error::{HeatflowError, Result};
    pub use crate::flow::{
        solve, step, BoundarySpec, BoundaryValue, Method, SolveReport, SolverConfig, Termination,
        TrajectoryGrid,
    };
    pub use crate::geometry::MetricParams;
    pub use crate::lagrangian::{BoxBound, ConstraintSet, DualState, LagrangianContext};
    pub use crate::models::{
        diver3, dynamic_unicycle, initial_grid, single_integrator, unicycle_const_vel, DiverParams,
        InitKind,
    };
    pub use crate::system::SystemModel;
    pub use crate::verify::{verify, RolloutResult};
}
