use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of a mathematical function.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An integrand produced a non-finite value at an interior node.
    #[error("integration error: non-finite integrand {value} at ({x:e}, {y:e})")]
    NonFiniteIntegrand { x: f64, y: f64, value: f64 },

    /// Quadrature did not reach the requested tolerance. `partial` holds the
    /// best available estimate.
    #[error("quadrature did not converge in {context}: estimate {partial:e} ± {error:e}")]
    NonConvergence {
        context: String,
        partial: f64,
        error: f64,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Well-formed input with invalid content (bad population label, frequency
    /// outside [0, 1], ...).
    #[error("data error at line {line}: {message}")]
    Data { line: usize, message: String },

    /// The rejection sampler found a density above its dominating constant.
    #[error("simulation error in cell {cell}: {message}")]
    Simulation { cell: usize, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
