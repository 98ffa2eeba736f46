//! JSON run configuration.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{HeatflowError, Result};
use crate::flow::{BoundarySpec, Method, SolverConfig};
use crate::lagrangian::{ConstraintSet, LagrangianContext};
use crate::models::{diver3, dynamic_unicycle, unicycle_const_vel, DiverParams, InitKind};
use crate::system::SystemModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelId {
    UnicycleConstVel,
    DynamicUnicycle,
    Diver3,
}

impl ModelId {
    pub fn state_dim(&self) -> usize {
        match self {
            ModelId::UnicycleConstVel => 3,
            ModelId::DynamicUnicycle => 5,
            ModelId::Diver3 => 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintConfig {
    /// `min <= x[index] <= max` with Heaviside sharpness `k_s`.
    Box {
        index: usize,
        min: f64,
        max: f64,
        k_s: f64,
    },
}

/// Optional step-controller settings.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepConfig {
    pub ds_init: Option<f64>,
    pub ds_min: Option<f64>,
    pub ds_max: Option<f64>,
    pub growth: Option<f64>,
    pub shrink: Option<f64>,
    pub max_state_change: Option<f64>,
}

fn default_nt() -> usize {
    101
}
fn default_epsilon() -> f64 {
    1e-4
}
fn default_s_max() -> f64 {
    1e4
}
fn default_wall_limit() -> f64 {
    600.0
}
fn default_output() -> PathBuf {
    PathBuf::from("heatflow-out")
}

/// One experiment. Entries of `x0`/`xf` may be `null` to mark a free
/// component; `free_start`/`free_end` do the same by mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelId,
    #[serde(default)]
    pub model_params: Option<DiverParams>,
    pub method: Method,
    #[serde(alias = "T")]
    pub horizon: f64,
    #[serde(default = "default_nt")]
    pub nt: usize,
    pub x0: Vec<Option<f64>>,
    pub xf: Vec<Option<f64>>,
    #[serde(default)]
    pub free_start: Option<Vec<bool>>,
    #[serde(default)]
    pub free_end: Option<Vec<bool>>,
    pub lambda: f64,
    /// Defaults to `lambda`.
    #[serde(default)]
    pub lambda_c: Option<f64>,
    #[serde(default)]
    pub constraints: Vec<ConstraintConfig>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_s_max")]
    pub s_max: f64,
    #[serde(default)]
    pub min_s: f64,
    #[serde(default = "default_wall_limit")]
    pub wall_limit: f64,
    pub init: InitKind,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub sweep: Option<Vec<f64>>,
    #[serde(default)]
    pub step: StepConfig,
    /// Rollout integration step; defaults to `T / 2000`.
    #[serde(default)]
    pub rollout_dt: Option<f64>,
}

fn invalid(msg: impl Into<String>) -> HeatflowError {
    HeatflowError::InvalidConfig(msg.into())
}

impl RunConfig {
    /// Parses JSON text; `origin` prefixes error locations.
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            let msg = msg.rsplit_once(" at line ").map_or(msg.as_str(), |(m, _)| m);
            invalid(format!("{origin}:{}:{}: {msg}", e.line(), e.column()))
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HeatflowError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn lambda_c(&self) -> f64 {
        self.lambda_c.unwrap_or(self.lambda)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.model.state_dim();
        if self.x0.len() != n || self.xf.len() != n {
            return Err(invalid(format!(
                "x0 and xf must have length {n} for {:?} (got {} and {})",
                self.model,
                self.x0.len(),
                self.xf.len()
            )));
        }
        for (name, mask) in [("free_start", &self.free_start), ("free_end", &self.free_end)] {
            if let Some(m) = mask {
                if m.len() != n {
                    return Err(invalid(format!("{name} must have length {n} (got {})", m.len())));
                }
            }
        }
        if self.x0.iter().chain(&self.xf).flatten().any(|v| !v.is_finite()) {
            return Err(invalid("boundary values must be finite"));
        }
        if self.model_params.is_some() && self.model != ModelId::Diver3 {
            return Err(invalid("model_params only applies to diver3"));
        }
        if let Some(p) = &self.model_params {
            p.validate()?;
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(invalid(format!("horizon must be positive (got {})", self.horizon)));
        }
        if self.nt < crate::flow::MIN_NODES {
            return Err(invalid(format!("nt must be at least {}", crate::flow::MIN_NODES)));
        }
        if !(self.lambda > 0.0) || !(self.lambda_c() > 0.0) {
            return Err(invalid("lambda and lambda_c must be positive"));
        }
        let mut sharpness = None;
        for (j, c) in self.constraints.iter().enumerate() {
            let ConstraintConfig::Box { index, min, max, k_s } = *c;
            if index >= n {
                return Err(invalid(format!("constraint {j}: index {index} out of range for n={n}")));
            }
            if !(min < max) {
                return Err(invalid(format!("constraint {j}: need min < max")));
            }
            if !(k_s > 0.0) {
                return Err(invalid(format!("constraint {j}: k_s must be positive")));
            }
            match sharpness {
                None => sharpness = Some(k_s),
                Some(k) if k != k_s => {
                    return Err(invalid("all constraints must share the same k_s"));
                }
                _ => {}
            }
        }
        if let Some(sw) = &self.sweep {
            if sw.is_empty() {
                return Err(invalid("sweep list is empty"));
            }
            if sw.iter().any(|l| !(*l > 0.0)) {
                return Err(invalid("sweep values must be positive"));
            }
        }
        if let Some(dt) = self.rollout_dt {
            if !(dt > 0.0 && dt <= self.horizon) {
                return Err(invalid("rollout_dt must lie in (0, T]"));
            }
        }
        self.solver_config().validate()
    }

    pub fn build_model(&self) -> Result<Arc<dyn SystemModel>> {
        Ok(match self.model {
            ModelId::UnicycleConstVel => Arc::new(unicycle_const_vel()),
            ModelId::DynamicUnicycle => Arc::new(dynamic_unicycle()),
            ModelId::Diver3 => Arc::new(diver3(self.model_params.unwrap_or_default())?),
        })
    }

    pub fn constraint_set(&self) -> Result<ConstraintSet> {
        let k_s = self
            .constraints
            .first()
            .map_or(100.0, |ConstraintConfig::Box { k_s, .. }| *k_s);
        let mut cs = ConstraintSet::new(Vec::new(), self.lambda_c(), k_s)?;
        for c in &self.constraints {
            let ConstraintConfig::Box { index, min, max, .. } = *c;
            cs.push_box(index, min, max);
        }
        Ok(cs)
    }

    pub fn context(&self) -> Result<LagrangianContext> {
        LagrangianContext::new(self.build_model()?, self.lambda, self.constraint_set()?)
    }

    fn free_mask(values: &[Option<f64>], mask: &Option<Vec<bool>>) -> Vec<bool> {
        values
            .iter()
            .enumerate()
            .map(|(i, v)| v.is_none() || mask.as_ref().is_some_and(|m| m[i]))
            .collect()
    }

    /// Boundary values with free components set to zero.
    pub fn endpoints(&self) -> (DVector<f64>, DVector<f64>) {
        let fill = |v: &[Option<f64>]| DVector::from_iterator(v.len(), v.iter().map(|x| x.unwrap_or(0.0)));
        (fill(&self.x0), fill(&self.xf))
    }

    pub fn boundary(&self) -> Result<BoundarySpec> {
        let (x0, xf) = self.endpoints();
        BoundarySpec::with_free(
            &x0,
            &xf,
            &Self::free_mask(&self.x0, &self.free_start),
            &Self::free_mask(&self.xf, &self.free_end),
        )
    }

    pub fn solver_config(&self) -> SolverConfig {
        let d = SolverConfig::default();
        let s = &self.step;
        SolverConfig {
            method: self.method,
            epsilon: self.epsilon,
            s_max: self.s_max,
            min_s: self.min_s,
            wall_limit: self.wall_limit,
            ds_init: s.ds_init.unwrap_or(d.ds_init),
            ds_min: s.ds_min.unwrap_or(d.ds_min),
            ds_max: s.ds_max.unwrap_or(d.ds_max),
            growth: s.growth.unwrap_or(d.growth),
            shrink: s.shrink.unwrap_or(d.shrink),
            max_state_change: s.max_state_change.unwrap_or(d.max_state_change),
            ..d
        }
    }
}
