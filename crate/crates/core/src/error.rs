use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty target cloud")]
    EmptyTarget,

    #[error("empty cloud in chamfer")]
    EmptyChamfer,

    #[error("empty scan")]
    EmptyScan,

    #[error("sample size exceeds cloud ({requested} > {available})")]
    SampleSizeExceedsCloud { requested: usize, available: usize },

    #[error("non-finite coordinate at point {index}")]
    NonFinitePoint { index: usize },

    #[error("invalid resolution {0} (must be > 0)")]
    InvalidResolution(f64),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric overflow in field")]
    NumericOverflow,

    #[error("non-finite gradient")]
    NonFiniteGradient,

    #[error("non-finite state at integration step {step}")]
    NonFiniteState { step: usize },

    #[error("non-finite loss at training step {step}")]
    NonFiniteLoss { step: usize },

    #[error("degenerate primitive: {0}")]
    DegeneratePrimitive(String),

    #[error("no point of the cloud falls inside the histogram extent")]
    OutOfExtent,

    #[error("parse error in {path} at {location}: {message}")]
    Parse {
        path: PathBuf,
        location: String,
        message: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
