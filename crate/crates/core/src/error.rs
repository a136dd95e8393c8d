use thiserror::Error;

use crate::expr::{EvalError, ParseError};

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("grade mismatch: {0}")]
    Grade(String),
    #[error("point {point:?} lies outside the domain")]
    OutsideDomain { point: Vec<f64> },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("density is not positive at {point:?} (value {value})")]
    NonPositiveDensity { point: Vec<f64>, value: f64 },
    #[error("flow left the chart at {point:?}")]
    FlowExit { point: Vec<f64> },
    #[error("singular Jacobian at {point:?} (determinant {det})")]
    SingularJacobian { point: Vec<f64>, det: f64 },
    #[error("precondition failed: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
