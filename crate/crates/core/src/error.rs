use thiserror::Error;

use crate::model::ValidationReport;

/// Everything that can go wrong in this crate.
///
/// Negative mathematical outcomes (a datum that is not polystable, a flow that
/// degenerates) are verdicts carried by reports, not errors.
#[derive(Debug, Error)]
pub enum Error {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("matrix is singular: {0}")]
    Singular(String),

    #[error("matrix is not Hermitian (defect {defect:.3e})")]
    NotHermitian { defect: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("{0} did not converge")]
    NoConvergence(&'static str),

    #[error("inseparable clusters after {rounds} rounds (residual {residual:.3e})")]
    InseparableClusters { rounds: usize, residual: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid tolerances: {0}")]
    Tolerances(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid datum: {0}")]
    Invalid(ValidationReport),

    #[error("generator: {0}")]
    Generator(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures that come from the numerics rather than from the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence(_) | Error::InseparableClusters { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
