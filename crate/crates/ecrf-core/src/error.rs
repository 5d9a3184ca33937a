//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration; the message names the offending field.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller violated an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Encoding failed (symbol outside table support, table overflow, ...).
    #[error("encode error: {0}")]
    Encode(String),

    /// A bitstream or checkpoint could not be decoded.
    #[error("decode error: {0}")]
    Decode(String),

    /// Training produced a non-finite loss; the message names the term.
    #[error("non-finite loss: {0}")]
    NonFinite(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
