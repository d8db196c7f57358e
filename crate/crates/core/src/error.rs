//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or batch dimensions do not line up.
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: String,
        expected: String,
        actual: String,
    },

    /// A precondition on an argument failed.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// `backward` was called on a tape that has no recorded loss gradient.
    #[error("tape has no loss gradient; run a loss evaluation before backward")]
    TapeUnprepared,

    /// `backward` was called twice on the same tape.
    #[error("tape already consumed by a previous backward pass")]
    TapeConsumed,

    /// A binary file did not start with the expected magic bytes.
    #[error("bad magic: {context} file does not start with {expected:?}")]
    BadMagic {
        context: &'static str,
        expected: &'static str,
    },

    /// A binary payload ended before the declared content.
    #[error("truncated payload: {0}")]
    Truncated(String),

    /// Declared dimensions overflow or disagree with the payload size.
    #[error("dimension overflow: {0}")]
    DimensionOverflow(String),

    /// A text format (descriptor, manifest, PPM header, CSV) failed to parse.
    #[error("parse error: {0}")]
    Parse(String),

    #[error("unsupported version {found} for {context} (expected {expected})")]
    UnsupportedVersion {
        context: &'static str,
        found: u16,
        expected: u16,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(
        context: impl Into<String>,
        expected: impl Into<String>,
        actual: impl Into<String>,
    ) -> Self {
        Error::ShapeMismatch {
            context: context.into(),
            expected: expected.into(),
            actual: actual.into(),
        }
    }
}
