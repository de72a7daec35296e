use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: row {row}: {msg}")]
    Parse {
        path: PathBuf,
        /// 1-based data row index (the header is row 0).
        row: usize,
        msg: String,
    },

    #[error("sample {index} violates declared bounds: {msg}")]
    Bounds { index: usize, msg: String },

    #[error("parameter layout mismatch: expected length {expected}, got {got}")]
    Layout { expected: usize, got: usize },

    #[error("no registered constants for {0}; supply custom constants")]
    UnsupportedBounds(String),

    #[error("calibration regime violated: {0}")]
    CalibrationRegime(String),

    #[error("iterate became non-finite at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("minimizer not reached: gradient norm {grad_norm:e} after {iterations} iterations (tolerance {tol:e})")]
    NotConverged {
        grad_norm: f64,
        iterations: usize,
        tol: f64,
    },

    #[error("linear system could not be factorized even with damping {gamma:e}")]
    Singular { gamma: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
