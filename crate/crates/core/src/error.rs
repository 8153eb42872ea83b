use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used to pick a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Validation,
    Data,
    Numerical,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Validation => 1,
            ErrorCategory::Data => 2,
            ErrorCategory::Numerical => 3,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    InvalidInput(String),

    #[error("scenario: {0}")]
    Scenario(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: schema: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("{path}: line {line}: {message}")]
    DataRow {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: no rows inside {start}..={end}")]
    Range {
        path: PathBuf,
        start: String,
        end: String,
    },

    #[error("alignment: {0}")]
    Alignment(String),

    #[error("unknown asset label `{0}`")]
    UnknownLabel(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("estimation: {0}")]
    Estimation(String),

    #[error("factorization: {0}")]
    Factorization(String),

    #[error("numerical: {0}")]
    Numerical(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: csv: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    /// Wraps an error with the scenario stage that produced it.
    #[error("{module}: {source}")]
    Module {
        module: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::InvalidInput(_) | Error::Scenario(_) | Error::Config(_) => {
                ErrorCategory::Validation
            }
            Error::Schema { .. }
            | Error::DataRow { .. }
            | Error::Range { .. }
            | Error::Alignment(_)
            | Error::UnknownLabel(_)
            | Error::InsufficientData(_)
            | Error::Estimation(_)
            | Error::Io { .. }
            | Error::Csv { .. } => ErrorCategory::Data,
            Error::Factorization(_) | Error::Numerical(_) => ErrorCategory::Numerical,
            Error::Module { source, .. } => source.category(),
        }
    }

    /// The scenario stage that failed, when known.
    pub fn module(&self) -> Option<&'static str> {
        match self {
            Error::Module { module, .. } => Some(module),
            _ => None,
        }
    }

    /// The error without its stage wrapper.
    pub fn cause(&self) -> &Error {
        match self {
            Error::Module { source, .. } => source.cause(),
            other => other,
        }
    }

    pub(crate) fn in_module(self, module: &'static str) -> Error {
        match self {
            already @ Error::Module { .. } => already,
            other => Error::Module {
                module,
                source: Box::new(other),
            },
        }
    }
}
