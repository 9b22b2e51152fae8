//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MopeError {
    /// A tensor operation was handed incompatible shapes. The message names
    /// the offending dimension.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A network spec failed validation; `layer` is the first offending
    /// layer index.
    #[error("invalid network spec at layer {layer}: {reason}")]
    Spec { layer: usize, reason: String },

    /// An argument outside its documented domain (negative sigma, zero
    /// ground truths, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Weight file does not start with the expected magic bytes.
    #[error("weight file has bad magic bytes")]
    BadMagic,

    /// Weight file uses a format version this build does not understand.
    #[error("unsupported weight file version {0}")]
    UnsupportedVersion(u32),

    /// Weight file ended mid-record; the name tells which tensor was cut.
    #[error("weight file truncated while reading {0:?}")]
    Truncated(String),

    /// A weight file entry does not correspond to any parameter of the
    /// network it was loaded for.
    #[error("unknown tensor name {0:?}")]
    UnknownTensor(String),

    /// The network expects a parameter the store does not provide.
    #[error("missing tensor {0:?}")]
    MissingTensor(String),

    /// Training produced a NaN or infinite loss.
    #[error("non-finite loss at iteration {0}")]
    NonFiniteLoss(usize),

    /// Malformed text input (CSV fixture, config file, PPM header).
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MopeError>;
