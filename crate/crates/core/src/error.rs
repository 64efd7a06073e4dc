use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A vector or matrix had the wrong length for the operation.
    #[error("shape mismatch in {what}: expected {expected}, got {actual}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    /// Inputs violated a precondition (non-finite values, bad ranges, empty sets, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// A configuration value is out of its legal range.
    #[error("configuration error: {0}")]
    Config(String),

    /// Sampling was requested from an empty replay buffer.
    #[error("replay buffer is empty")]
    EmptyBuffer,

    /// A label is not present in the label registry.
    #[error("unknown label: {0:?}")]
    UnknownLabel(String),

    /// A flow file could not be parsed.
    #[error("ingestion error in {path} (row {row}): {message}")]
    Ingestion {
        path: String,
        row: u64,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A container file failed its magic/digest checks.
    #[error("corrupt container: {0}")]
    Corrupt(String),

    /// A container file was written by an unsupported format version.
    #[error("unsupported container version {found} (supported: {supported})")]
    VersionMismatch { found: u32, supported: u32 },

    /// A model and a dataset (or two artifacts) do not fit together.
    #[error("incompatible artifacts: {0}")]
    Incompatible(String),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
