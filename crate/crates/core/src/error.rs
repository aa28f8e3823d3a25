use thiserror::Error;

use crate::expr::EvalError;
use crate::taylor::DiffError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Expr(#[from] EvalError),
    #[error("tangent vector y = 0 is outside the slit tangent bundle")]
    ZeroDirection,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("singular metric in {context}")]
    SingularMetric { context: String },
    #[error("degenerate indicatrix measure at node {node} (y = {y:?}): {reason}")]
    DegenerateMeasure { node: usize, y: Vec<f64>, reason: String },
    #[error("dimension {0} is not supported by the indicatrix quadrature (use 2 or 3)")]
    UnsupportedDimension(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("integration failed at t = {time}: non-finite state")]
    IntegrationFailure { time: f64 },
    #[error("coefficient does not decay within radius {radius}: boundary magnitude {magnitude:e}")]
    Truncation { radius: f64, magnitude: f64 },
    #[error("non-invertible chart Jacobian at {0:?}")]
    SingularChart(Vec<f64>),
}
