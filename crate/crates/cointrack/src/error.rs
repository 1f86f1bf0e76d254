//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(&'static str),

    #[error("matrix is singular or numerically non-invertible")]
    SingularMatrix,

    #[error("point maps to infinity (|w| below epsilon)")]
    PointAtInfinity,

    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),

    #[error("mask is empty")]
    EmptyMask,

    #[error("rectangle has a zero-length side")]
    DegenerateRect,

    #[error("example index is empty or smaller than k")]
    EmptyIndex,

    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("embedding backend failure: {0}")]
    BackendFailure(String),

    #[error("no initialization source: neither previous pose nor flow given")]
    NoInitializationSource,

    #[error("invalid template: {0}")]
    InvalidTemplate(String),

    #[error("missing frame {0}")]
    MissingFrame(usize),

    #[error("insufficient data: {0}")]
    InsufficientData(&'static str),

    #[error("degenerate trajectory at frame {frame}: projected quad collapses")]
    DegenerateTrajectory { frame: usize },

    #[error("malformed data in {path}: {reason}")]
    MalformedData { path: PathBuf, reason: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error for {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn image(path: impl Into<PathBuf>, source: image::ImageError) -> Self {
        Error::Image { path: path.into(), source }
    }

    pub fn malformed(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::MalformedData { path: path.into(), reason: reason.into() }
    }

    /// Exit-code category used by the CLI: 2 usage, 3 data, 4 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) => 2,
            Error::Io { .. }
            | Error::Image { .. }
            | Error::MalformedData { .. }
            | Error::MissingFrame(_)
            | Error::Json(_)
            | Error::InvalidTemplate(_)
            | Error::InsufficientData(_) => 3,
            _ => 4,
        }
    }
}
