use thiserror::Error;

use crate::equilibrium::DualPoint;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("bad distribution parameters: {0}")]
    BadFamilyParams(String),

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("bad parameters: {0}")]
    BadParams(String),

    #[error("simplex breakdown: {0}")]
    NumericalBreakdown(String),

    /// The dual solver ran out of epochs; the best iterate found is attached.
    #[error("dual solver did not converge after {epochs} epochs (residual {residual:.3e})")]
    NoConvergence {
        epochs: usize,
        residual: f64,
        best: Box<DualPoint>,
    },

    /// The seller's tie-splitting system has no solution at the given multipliers.
    /// `certificate` holds Farkas multipliers for the rows of that system.
    #[error("tie resolution infeasible at the supplied multipliers")]
    TieResolutionInfeasible { certificate: Vec<f64> },

    #[error("market has no buyers")]
    EmptyMarket,

    #[error("stream mismatch: {0}")]
    StreamMismatch(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
