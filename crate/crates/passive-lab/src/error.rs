use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{what} is singular (or numerically singular)")]
    Singular { what: String },

    #[error("invalid parameter: {0}")]
    Invalid(String),

    #[error("state dimension {0} exceeds the dense-solver cap of {MAX_STATE_DIM}")]
    TooLarge(usize),

    #[error("iteration did not converge: residual {residual:.3e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

/// Hard cap on dense state dimension; everything here is dense linear algebra.
pub const MAX_STATE_DIM: usize = 5000;

pub type Result<T> = std::result::Result<T, Error>;
