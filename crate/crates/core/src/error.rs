//! Error types shared by every module of the crate.

use alloc::string::String;

/// Errors raised while decoding IDX byte streams.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IdxError {
    #[error("bad magic in {field}: expected 0x0000_08{expected_ndim:02x}, found {found:#010x}")]
    BadMagic {
        field: &'static str,
        expected_ndim: u8,
        found: u32,
    },
    #[error("truncated {field}: need {needed} bytes, have {available}")]
    Truncated {
        field: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("count mismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("trailing bytes after {field}: {extra} unexpected bytes")]
    TrailingBytes { field: &'static str, extra: usize },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Dimensions of two operands do not agree.
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    /// Parameter vectors built for different network layouts.
    #[error("layout mismatch in {0}")]
    Layout(&'static str),
    /// A NaN or infinity reached a place that requires finite values.
    #[error("non-finite value in {0}")]
    Numeric(&'static str),
    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),
    /// Invalid configuration values.
    #[error("configuration error: {0}")]
    Config(String),
    /// A task or class that was never learned.
    #[error("lookup error: {0}")]
    Lookup(String),
    #[error(transparent)]
    Idx(#[from] IdxError),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
