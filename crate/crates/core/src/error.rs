use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Io,
    Geometry,
    Config,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed raster header {path}: {message}")]
    Header { path: PathBuf, message: String },
    #[error("payload size mismatch: header implies {expected} bytes, found {actual}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("non-finite value at valid pixel ({x}, {y}) band {band}")]
    NonFinite { x: usize, y: usize, band: usize },
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("target pixel ({x}, {y}) is not valid in the inputs")]
    InvalidTarget { x: usize, y: usize },
    #[error("no jointly valid pixels")]
    NoValidPixels,
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("date series error: {0}")]
    Series(String),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Io { .. } => ErrorCategory::Io,
            Error::Header { .. } | Error::SizeMismatch { .. } | Error::NonFinite { .. } => {
                ErrorCategory::Io
            }
            Error::Geometry(_) | Error::InvalidTarget { .. } | Error::NoValidPixels => {
                ErrorCategory::Geometry
            }
            Error::Series(_) => ErrorCategory::Geometry,
            Error::Config(_) => ErrorCategory::Config,
            Error::Numeric(_) => ErrorCategory::Numeric,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
