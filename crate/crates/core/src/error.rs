use std::path::PathBuf;

use thiserror::Error;

use crate::laplace::LaplaceFit;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cholesky factorization failed: {0}")]
    CholeskyFailure(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("value {value} is outside the range of the warp (infimum {infimum})")]
    OutOfRange { value: f64, infimum: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("newton iteration did not converge after {iterations} iterations")]
    MaxIterationsExceeded {
        iterations: usize,
        best: Box<LaplaceFit>,
    },

    #[error("laplace fit has not converged")]
    NotConverged,

    #[error("elliptical slice sampler exhausted {0} bracket shrinks")]
    ShrinkExhausted(usize),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("garch fit failed: {0}")]
    FitFailure(String),

    #[error("parse error at row {row} (line {line}): {message}")]
    Parse {
        row: usize,
        line: u64,
        message: String,
    },

    #[error("non-positive price {price} at row {row}")]
    NonPositivePrice { row: usize, price: f64 },

    #[error("window of {window} exceeds series length {len}")]
    WindowTooLarge { window: usize, len: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, got })
    }
}
