//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Operand shapes are incompatible.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A configured safety cap (e.g. densification size) was exceeded.
    #[error("resource limit: {0}")]
    ResourceLimit(String),

    /// A file could not be parsed as the expected format.
    #[error("format error: {0}")]
    Format(String),

    /// Numerical failure (non-finite values, SVD non-convergence).
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}
