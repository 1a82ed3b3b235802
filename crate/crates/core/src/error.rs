use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid object mask: {0}")]
    Mask(String),

    #[error("graymap {path}: {reason}")]
    Graymap { path: PathBuf, reason: String },

    #[error("grid mismatch: expected {expected}x{expected}, found {found_rows}x{found_cols}")]
    GridMismatch {
        expected: usize,
        found_rows: usize,
        found_cols: usize,
    },

    #[error("degenerate source aperture: {0}")]
    DegenerateAperture(String),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("scenario {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// True for errors caused by malformed user input rather than runtime failure.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Parse { .. } | Error::Config(_))
    }
}
