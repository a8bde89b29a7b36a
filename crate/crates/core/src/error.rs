use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the depth pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point at depth {depth} cannot be projected")]
    DegenerateProjection { depth: f64 },

    #[error("triangulation degenerate at epipole (denominator {denominator:e})")]
    EpipoleDegenerate { denominator: f64 },

    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),

    #[error("invalid pose: {0}")]
    InvalidPose(String),

    #[error("camera placement invalid: {0}")]
    InvalidCameraPlacement(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("no valid pixels")]
    NoValidPixels,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    /// A run finished but produced nothing usable.
    #[error("diagnostic: {0}")]
    Diagnostic(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
