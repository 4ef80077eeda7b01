use thiserror::Error;

/// Errors raised by state construction, the solvers and the certificate checks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid space shape {dims:?}: {reason}")]
    InvalidShape { dims: Vec<usize>, reason: String },

    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },

    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{what} is not normalized (norm {norm})")]
    NotNormalized { what: String, norm: f64 },

    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("matrix is not positive semidefinite (most negative eigenvalue {0:e})")]
    NotPositive(f64),

    #[error("trace is {0}, expected 1")]
    BadTrace(f64),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("local operator on subsystem {subsystem} is not unitary (deviation {deviation:e})")]
    NotUnitary { subsystem: usize, deviation: f64 },

    #[error("{needed} terms are required to represent the state, but only {got} were allowed")]
    TooFewTerms { needed: usize, got: usize },

    #[error("active set is empty: no weight exceeds {0:e}")]
    EmptyActiveSet(f64),

    #[error("{quantity} has an imaginary component of magnitude {magnitude:e}")]
    ImaginaryComponent { quantity: String, magnitude: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
