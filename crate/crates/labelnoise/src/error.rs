//! Crate-wide error type.

use std::fmt;
use std::io;

/// Everything that can go wrong across the toolkit.
#[derive(Debug)]
pub enum Error {
    /// A parameter or configuration value is outside its legal domain.
    InvalidConfig(String),
    /// An operation needs clean labels and the dataset has none.
    MissingCleanLabels,
    /// An operation needs group tags and the dataset has none.
    MissingGroups,
    /// Shapes disagree (feature dimension, class count, matrix size, ...).
    DimensionMismatch(String),
    /// A class / group / confusion cell that must be populated is empty.
    EmptyCell(String),
    /// A statistic that the caller asked for could not be estimated.
    AbsentStatistic(String),
    /// A non-finite value turned up where only finite ones are legal.
    NonFinite(String),
    /// A text input (CSV, config, model file) failed to parse.
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    /// Underlying I/O failure.
    Io(io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidConfig(m) => write!(f, "invalid configuration: {m}"),
            Error::MissingCleanLabels => write!(f, "dataset has no clean labels"),
            Error::MissingGroups => write!(f, "dataset has no group tags"),
            Error::DimensionMismatch(m) => write!(f, "dimension mismatch: {m}"),
            Error::EmptyCell(m) => write!(f, "empty cell: {m}"),
            Error::AbsentStatistic(m) => write!(f, "absent statistic: {m}"),
            Error::NonFinite(m) => write!(f, "non-finite value: {m}"),
            Error::Parse {
                path,
                line,
                message,
            } => write!(f, "{path}:{line}: {message}"),
            Error::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(e: io::Error) -> Self {
        Error::Io(e)
    }
}

impl Error {
    /// Whether the error stems from bad configuration / input shape (as
    /// opposed to a runtime failure). The CLI maps the former to exit code 1
    /// and the latter to exit code 2.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_)
                | Error::MissingCleanLabels
                | Error::MissingGroups
                | Error::DimensionMismatch(_)
                | Error::Parse { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
