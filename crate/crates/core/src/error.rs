use std::path::PathBuf;

use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("ingestion failed for {path}: {}", .issues.join("; "))]
    Ingestion { path: PathBuf, issues: Vec<String> },

    #[error("covariance is rank-deficient (min eigenvalue {min_eig:.3e}); increase covariance_ridge")]
    DegenerateCovariance { min_eig: f64 },

    #[error("uncertainty set has no support vectors")]
    EmptySupport,

    #[error("empty calibration set")]
    EmptyCalibration,

    #[error("solver failure ({status}): {detail}")]
    Solver { status: String, detail: String },

    #[error("controller failed: {detail} (program dumped to {dump:?})")]
    Controller { detail: String, dump: Option<PathBuf> },

    #[error("LP format: line {line}: {msg}")]
    LpFormat { line: usize, msg: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Validation(format!("{name} must be finite, got {v}")))
    }
}

pub(crate) fn ensure_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            got,
        })
    }
}
