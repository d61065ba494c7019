use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An input violates a stated precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// Parameters are individually valid but make a bound constant blow up.
    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A fixed-point iteration did not settle within its step budget.
    #[error("no convergence after {steps} steps (last relative change {last_change:e})")]
    NoConvergence { steps: usize, last_change: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
