use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    /// The scattering media evaluated to a non-positive value.
    #[error("invalid media: value {value} at point {point:?} is not strictly positive")]
    InvalidMedia { value: f64, point: Vec<f64> },

    /// Invalid configuration (bad parameters, unknown names, mismatched dimensions).
    #[error("configuration error: {0}")]
    Config(String),

    /// Matrix or basis assembly failed.
    #[error("assembly error: {0}")]
    Assembly(String),

    /// A linear solve failed or did not reach the requested residual.
    #[error("solver error: {message} (achieved residual {residual:.3e})")]
    Solver { message: String, residual: f64 },

    /// Error metric could not be evaluated.
    #[error("metric error: {0}")]
    Metric(String),

    /// Out-of-range index.
    #[error("index {index} out of range (len {len})")]
    Index { index: usize, len: usize },

    /// IO error with path context.
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
