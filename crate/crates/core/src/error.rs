//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the fedtank library.
#[derive(Debug, Error)]
pub enum Error {
    /// Two parameter vectors cannot be combined (different shape tag or length).
    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: String, right: String },

    /// An operation received an empty model or sample list.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// Weighted mean with a weight sum of zero.
    #[error("weight sum is zero")]
    ZeroWeightSum,

    /// A parameter was outside its allowed range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// IDX file carried an unexpected magic number.
    #[error("bad IDX magic in {path}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic {
        path: String,
        expected: u32,
        found: u32,
    },

    /// IDX file ended before the declared payload.
    #[error("truncated IDX file {path}: needed {needed} bytes, found {found}")]
    Truncated {
        path: String,
        needed: usize,
        found: usize,
    },

    /// Image and label files disagree on the sample count.
    #[error("IDX count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    /// A tail plan asked for more samples of a class than the dataset holds.
    #[error("insufficient samples of class {class}: need {needed}, have {available}")]
    InsufficientSamples {
        class: usize,
        needed: usize,
        available: usize,
    },

    /// A label had no entry in a flip mapping.
    #[error("label {0} has no entry in the flip mapping")]
    UnmappedLabel(usize),

    /// The vote protocol was violated (ballot for a selected candidate, duplicate ballot).
    #[error("vote protocol violation: {0}")]
    Protocol(String),

    /// A config file failed validation; the offending key is named.
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    /// An error that occurred while running a specific round.
    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// Attach round context to an error bubbling out of the round loop.
    pub fn in_round(self, round: usize) -> Self {
        Error::Round {
            round,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
