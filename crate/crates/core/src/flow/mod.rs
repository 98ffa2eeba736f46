//! Trajectory grids, the discretized heat flow and its integration in `s`.

mod discrete;
mod grid;
mod solver;

use serde::{Deserialize, Serialize};

pub use discrete::{
    action, constraint_dual_flow_rhs, dual_flow_rhs, state_flow_rhs, stationarity_residuals,
};
pub use grid::{
    differentiate, time_derivatives, BoundarySpec, BoundaryValue, End, TrajectoryGrid, MIN_NODES,
};
pub use solver::{solve, step, SolveReport, SolverConfig, Termination};

/// Which flow to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Plain heat flow on `L` (duals ignored).
    #[serde(rename = "aghf", alias = "AGHF")]
    Aghf,
    /// Heat flow on the extended Lagrangian with dual ascent.
    #[serde(rename = "el_aghf", alias = "EL-AGHF", alias = "el-aghf")]
    ElAghf,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Aghf => "AGHF",
            Method::ElAghf => "EL-AGHF",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "aghf" => Ok(Method::Aghf),
            "el_aghf" => Ok(Method::ElAghf),
            _ => Err(format!("unknown method '{s}' (expected aghf or el_aghf)")),
        }
    }
}
