//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible tensor or layer shapes. The message names the shapes involved.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A value outside the operation's documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An operation that needs at least one element received none.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// Model file carries a format version this build does not read.
    #[error("unsupported model format version {found} (supported: {supported})")]
    ModelVersion { found: u32, supported: u32 },

    /// Model blob is shorter or longer than the manifest promises.
    #[error("truncated model blob: manifest expects {expected} bytes, file holds {found}")]
    TruncatedBlob { expected: u64, found: u64 },

    /// Tensor index entries overlap or leave gaps in the blob.
    #[error("bad tensor index layout: {0}")]
    OffsetLayout(String),

    /// IDX file magic number does not match the expected format.
    #[error("IDX magic mismatch: expected {expected:#010x}, found {found:#010x}")]
    MagicMismatch { expected: u32, found: u32 },

    /// Image and label files disagree on sample count.
    #[error("sample count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    /// File format (or format variant) this build does not ingest.
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    /// Ledger structure does not match the network (or peer ledger) it is used with.
    #[error("ledger mismatch: {0}")]
    LedgerMismatch(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unknown strategy {name:?} (available: {available})")]
    UnknownStrategy { name: String, available: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("manifest error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code the CLI maps this error to: 3 for I/O failures,
    /// 2 for everything else (validation).
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Io(_) => 3,
            _ => 2,
        }
    }
}
