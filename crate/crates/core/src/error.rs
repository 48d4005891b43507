use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the training toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's preconditions (shape mismatch, value out of range).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A configuration value is unusable (e.g. group size does not divide the layer).
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed input file. `location` is a byte offset or a line number.
    #[error("parse error in {source_name} at {location}: {message}")]
    Parse {
        source_name: String,
        location: String,
        message: String,
    },

    /// Exact enumeration refused because the model is too large.
    #[error("model too large for exact enumeration: {visible} visible + {hidden} hidden units exceeds {limit}")]
    TooLarge {
        visible: usize,
        hidden: usize,
        limit: usize,
    },

    /// An operation requires state the object does not have.
    #[error("invalid state: {0}")]
    State(String),

    /// A non-finite value appeared in parameters or statistics.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(
        source_name: impl Into<String>,
        location: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            location: location.into(),
            message: message.into(),
        }
    }
}

macro_rules! ensure {
    ($cond:expr, $variant:ident, $($arg:tt)+) => {
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !$cond {
            return Err($crate::error::Error::$variant(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure;
