use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Error)]
pub enum BubbleError {
    /// A model parameter violates its domain (a>0, b>0, c>=0, k>=2, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An operation that requires the oscillatory regime (a < 4b) was called
    /// outside it.
    #[error("operation requires the oscillatory regime a < 4b (got a = {a}, b = {b})")]
    NotOscillatory { a: f64, b: f64 },

    /// Input data does not satisfy an operation's precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A matrix that must be positive definite is not.
    #[error("matrix not positive definite: {0}")]
    NotPositiveDefinite(String),

    /// A numerical guard tripped (degenerate determinant, no convergence, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, BubbleError>;
