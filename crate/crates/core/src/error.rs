use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("unknown {what} `{name}`")]
    Lookup { what: &'static str, name: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("cholesky factorization failed after jitter ladder {ladder:?}")]
    Cholesky { ladder: Vec<f64> },

    #[error("unsupported operation: {0}")]
    Capability(String),

    #[error("training failed at iteration {iteration}: {source}")]
    Training {
        iteration: usize,
        source: Box<Error>,
        last_good: Option<Box<crate::gplvm::GphlvmModel>>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used to map errors onto process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Numerical,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Numerical(_) | Error::Cholesky { .. } => ErrorClass::Numerical,
            Error::Io(_) => ErrorClass::Io,
            Error::Training { source, .. } => source.class(),
            _ => ErrorClass::Validation,
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
