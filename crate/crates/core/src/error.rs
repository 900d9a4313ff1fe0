use std::path::PathBuf;

use nalgebra::DVector;
use thiserror::Error;

/// Errors produced by dissimilarity computation and its supporting routines.
#[derive(Debug, Error)]
pub enum DidError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Cholesky failed at every rung of the jitter ladder, usually because
    /// two landmarks coincide.
    #[error("kernel matrix of size {size} is singular (factorization failed with jitter up to {max_jitter:e})")]
    SingularKernelMatrix { size: usize, max_jitter: f64 },

    #[error("power iteration did not converge after {iterations} iterations (last estimate {last_value:e})")]
    NotConverged {
        iterations: usize,
        last_value: f64,
        last_vector: DVector<f64>,
    },

    #[error("problem too large for dense evaluation: {0}")]
    ResourceLimit(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image format error on {path}: {message}")]
    Format { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, DidError>;

pub(crate) fn invalid(msg: impl Into<String>) -> DidError {
    DidError::InvalidArgument(msg.into())
}
