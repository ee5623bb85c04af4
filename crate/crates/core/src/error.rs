use thiserror::Error;

use crate::grid::Basis;

/// Every fallible operation in the crate reports one of these.
#[derive(Debug, Error)]
pub enum Error {
    #[error("basis mismatch: expected {expected:?} values, found {found:?}")]
    BasisMismatch { expected: Basis, found: Basis },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("symbol evaluated to a non-finite value at {point}")]
    NonFiniteSymbol { point: String },

    #[error("vector must be nonzero")]
    ZeroVector,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("support violation: {0}")]
    Support(String),

    #[error("grid cannot hold the construction: {0}")]
    GridTooSmall(String),

    #[error("numerical abort at t = {time}: {reason}")]
    NumericalAbort { time: f64, reason: String },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("zero denominator: {0}")]
    ZeroDenominator(String),

    #[error("malformed snapshot: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
