use std::path::PathBuf;

/// Errors produced by the explanation engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("unsupported by oracle: {0}")]
    Unsupported(String),

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("degenerate fit: {0}")]
    Fit(String),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(offset: usize, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }

    /// True for failures that originate on the oracle side (capability gaps,
    /// scoring failures, wire protocol problems).
    pub fn is_oracle(&self) -> bool {
        matches!(
            self,
            Error::Unsupported(_) | Error::Oracle(_) | Error::Protocol(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
