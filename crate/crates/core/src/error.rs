//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by estimation, correction, and reporting routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("matrix is not positive semi-definite: {0}")]
    NotPsd(String),

    #[error("correction case not applicable: {0}")]
    CaseInapplicable(String),

    #[error("variance undefined for group {group}: no observed event at or before the restriction time")]
    VarianceUndefined { group: usize },

    #[error("need at least 1/alpha = {needed:.0} permutation replicates, have {available}")]
    InsufficientReplicates { needed: f64, available: usize },

    #[error("method unavailable: {0}")]
    MethodUnavailable(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
