use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("magic mismatch: expected {expected:#010x}, found {found:#010x}")]
    MagicMismatch { expected: u32, found: u32 },

    #[error("truncated stream: {0}")]
    TruncatedStream(&'static str),

    #[error("count mismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("record length: {len} bytes is not a multiple of {record}")]
    RecordLength { len: usize, record: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("insufficient class examples: label {label} needs {needed}, pool has {available}")]
    InsufficientClassExamples {
        label: usize,
        needed: usize,
        available: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("label universe mismatch")]
    UniverseMismatch,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("zero variance in series")]
    ZeroVariance,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed csv at line {line}: {msg}")]
    Csv { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures caused by the input data rather than the caller's configuration.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::MagicMismatch { .. }
                | Error::TruncatedStream(_)
                | Error::CountMismatch { .. }
                | Error::RecordLength { .. }
                | Error::EmptyDataset
                | Error::InsufficientClassExamples { .. }
                | Error::Csv { .. }
                | Error::Io(_)
        )
    }
}
