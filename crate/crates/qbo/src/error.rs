//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum QboError {
    /// Invalid configuration (bad file, bad field value, bad dimensions).
    #[error("configuration error: {0}")]
    Config(String),
    /// A caller violated an operation precondition (out-of-bounds force,
    /// dimension mismatch, invalid estimator parameters).
    #[error("domain error: {0}")]
    Domain(String),
    /// Numerical failure that should be impossible under the documented
    /// invariants (singular precision matrix, failed factorization).
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, QboError>;
