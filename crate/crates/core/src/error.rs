//! Error types shared across the engine.

use std::path::PathBuf;

/// Errors produced by grid validation, mask construction, and the attention
/// kernels.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value violates an invariant (bad tile divisibility,
    /// even window component, zero extents, and so on).
    #[error("configuration error: {0}")]
    Config(String),

    /// A tensor or mask has a shape that does not match its peers.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Non-finite value encountered where finite data is required.
    #[error("non-finite value in {context} at element {index}")]
    NonFinite { context: &'static str, index: usize },

    /// A combined mask row with no set bits; attention over it is undefined.
    #[error("empty attention row at (head {head}, block {block})")]
    EmptyRow { head: usize, block: usize },

    /// Fixture file rejected during decode.
    #[error("fixture format error at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },

    /// Underlying filesystem failure.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn format(offset: u64, reason: impl Into<String>) -> Self {
        Error::Format {
            offset,
            reason: reason.into(),
        }
    }
}
