use thiserror::Error;

/// Errors raised by the solver and its numerical building blocks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeatflowError {
    #[error("matrix is not full column rank (sigma_min/sigma_max = {ratio:.3e})")]
    RankDeficient { ratio: f64 },

    #[error("orthogonal complement incomplete: found {found} of {needed} directions")]
    ComplementIncomplete { found: usize, needed: usize },

    #[error("augmented frame is singular (condition number {condition:.3e})")]
    SingularFrame { condition: f64 },

    #[error("inertia matrix is not positive definite")]
    SingularInertia,

    #[error("non-finite value encountered in {0}")]
    NonFiniteField(&'static str),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid penalty lambda {0}; must be positive")]
    InvalidLambda(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("initial trajectory violates fixed boundary component {component} at {end} (expected {expected}, got {actual})")]
    InitInfeasibleBoundary {
        end: &'static str,
        component: usize,
        expected: f64,
        actual: f64,
    },

    #[error("step rejected: {0}")]
    StepRejected(&'static str),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, HeatflowError>;

impl From<std::io::Error> for HeatflowError {
    fn from(e: std::io::Error) -> Self {
        HeatflowError::Io(e.to_string())
    }
}
