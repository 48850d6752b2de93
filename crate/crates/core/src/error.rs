use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("value {value:e} overflows the {label} format")]
    Overflow { value: f64, label: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid CSR structure: {0}")]
    InvalidStructure(String),

    #[error("factorization breakdown at row {row} (pivot {pivot:e})")]
    Breakdown { row: usize, pivot: f64 },

    #[error("matrix is not positive definite (negative energy {0:e})")]
    NotPositiveDefinite(f64),

    #[error("preconditioner is not positive definite (<z, r> = {0:e}); use symmetric pre+post smoothing")]
    IndefinitePreconditioner(f64),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dims(context: &'static str, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            found,
        }
    }
}
