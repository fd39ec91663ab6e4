use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    /// A precondition of the convergence analysis does not hold.
    #[error("regime violation: {0}")]
    RegimeViolation(String),

    #[error("learning rate at boundary: eta = 2/L makes (2 - eta*L) vanish")]
    LearningRateAtBoundary,

    #[error("infeasible partition: {0}")]
    InfeasiblePartition(String),

    #[error("csv error at row {row}, column \"{column}\": {message}")]
    CsvCell {
        row: usize,
        column: String,
        message: String,
    },

    #[error("csv file {0} has no rows")]
    NoRows(PathBuf),

    #[error("csv file is missing column \"{0}\"")]
    MissingColumn(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// I/O and CSV serialization failures, as opposed to bad inputs.
    pub fn is_infrastructure(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Csv(_))
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
