use thiserror::Error;

/// Errors raised by the solvers and the experiment harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("value {value} is outside the range of the transition rate (supremum {supremum})")]
    OutOfRange { value: f64, supremum: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("stability violation: {inequality} (lhs = {lhs}, must be < {bound})")]
    StabilityViolation {
        inequality: &'static str,
        lhs: f64,
        bound: f64,
    },

    #[error("solutions are not comparable: {0}")]
    Incomparable(String),

    #[error("mean-field fixed point did not converge")]
    ConvergenceFailure,
}

pub type Result<T> = std::result::Result<T, Error>;
