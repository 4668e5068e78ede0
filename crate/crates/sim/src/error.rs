use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] prosumer_cournot::Error),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed table, line {line}: {message}")]
    Table { line: usize, message: String },

    #[error("{0}")]
    Input(String),

    #[error("thread pool: {0}")]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
}

impl SimError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SimError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error: 2 for bad input, 3 for numerical
    /// failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            SimError::Model(
                prosumer_cournot::Error::NotPositiveDefinite { .. }
                | prosumer_cournot::Error::NotConverged { .. },
            )
            | SimError::ThreadPool(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
