use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A state machine was driven outside its contract (e.g. stepping a finished episode).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Training produced non-finite values (usually a step size that is too large).
    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("unsupported metric: {0}")]
    UnsupportedMetric(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("malformed csv {path} (row {row}, column {column}): {message}")]
    Csv {
        path: String,
        row: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(what: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension {
            what,
            expected,
            got,
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by user-supplied configuration or input files.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::Csv { .. } | Error::InvalidInput(_)
        )
    }
}
