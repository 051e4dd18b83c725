//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LfError {
    /// Incompatible tensor or weight shapes.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A precondition of an operation was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    /// NaN or infinity where a finite value is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Training or integration produced NaN / failed to converge.
    #[error("numerical divergence: {0}")]
    Divergence(String),

    /// Invalid experiment or network configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LfError>;
