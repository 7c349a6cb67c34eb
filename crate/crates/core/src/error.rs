//! Shared error type for the toolkit.

use thiserror::Error;

/// Errors produced by toolkit operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input is empty after whitespace normalization")]
    EmptyInput,

    #[error("input of {len} tokens exceeds the backend length budget of {max}")]
    TooLong { len: usize, max: usize },

    #[error("input has {len} tokens but at least {min} are required")]
    TooShort { len: usize, min: usize },

    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("no trigger template for label `{label}`")]
    MissingTemplate { label: String },

    #[error("no fill provided for slot at token index {slot}")]
    MissingFill { slot: usize },

    #[error("token sequences have different lengths ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("expected {expected} text field(s), got {got}")]
    FieldCount { expected: usize, got: usize },

    #[error("masked sequence contains no slot markers")]
    NoSlots,

    #[error("candidate list is empty")]
    EmptyCandidates,

    #[error("no attacked instances remain after excluding skipped ones")]
    EmptyAfterSkip,

    #[error("denominator is zero: {0}")]
    ZeroDenominator(String),

    #[error("invalid parameter: {0}")]
    Domain(String),

    #[error("malformed record at line {line}: {msg}")]
    MalformedRow { line: usize, msg: String },

    #[error("invalid trigger template `{pattern}`: {msg}")]
    BadTemplate { pattern: String, msg: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
