use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("missing data: element {element} has no value for {property}")]
    DataMissing { element: String, property: String },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("division by zero: {0}")]
    DivideByZero(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("no data: {0}")]
    NoData(String),

    #[error("candidate pool exhausted")]
    ExhaustedPool,

    #[error("classification unavailable after {attempts} attempts: {reason}")]
    ClassificationUnavailable { attempts: usize, reason: String },

    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },

    #[error("{path}:{line}: {message}")]
    Load {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0}: log contains no records")]
    EmptyResult(PathBuf),

    #[error(transparent)]
    Formula(#[from] crate::extraction::formula::FormulaError),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn file(path: impl Into<PathBuf>, message: impl std::fmt::Display) -> Self {
        Error::File {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// Process exit status for the command-line front end.
    ///
    /// 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) => 1,
            Error::NumericalFailure(_) | Error::DivideByZero(_) => 3,
            Error::Formula(e) if e.is_arithmetic() => 3,
            _ => 2,
        }
    }
}
