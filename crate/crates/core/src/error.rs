use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("dense matrix of {rows} rows exceeds the budget of {budget} rows")]
    DenseBudgetExceeded { rows: usize, budget: usize },

    #[error("covariance is ill-conditioned: smallest eigenvalue {min_eigenvalue:e} (jitter {jitter:e})")]
    IllConditioned { min_eigenvalue: f64, jitter: f64 },

    #[error("goal cell {goal:?} is unreachable from start cell {start:?}")]
    Unreachable {
        start: (usize, usize),
        goal: (usize, usize),
    },

    #[error("training diverged at step {step}: loss {loss:e} (last finite loss {last_finite:e})")]
    Diverged {
        step: usize,
        loss: f64,
        last_finite: f64,
    },

    #[error("non-finite training loss {0}")]
    NonFiniteLoss(f64),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
