use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParameter { key: &'static str, reason: String },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("singular tridiagonal system: zero pivot at row {row}")]
    SingularSystem { row: usize },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("solver produced a non-finite value at step {step}")]
    NonFinite { step: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(key: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        key,
        reason: reason.into(),
    }
}
