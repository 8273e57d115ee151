use thiserror::Error;

use crate::coupling::HistoryRecord;

#[derive(Debug, Error)]
pub enum FsiError {
    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("law certification failed: {0}")]
    LawCertification(String),

    #[error("monotone step solver did not converge in {iterations} iterations (last residual {residual:e})")]
    NonlinearDivergence { iterations: usize, residual: f64 },

    #[error("fixed-point iteration failed at eps = {eps:e}: {reason}")]
    IterationFailure {
        eps: f64,
        reason: String,
        history: Vec<HistoryRecord>,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FsiError>;
