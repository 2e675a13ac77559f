use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A JSONL line that is not valid JSON or does not match the record shape.
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },

    /// A structurally valid record that violates an invariant of the schema.
    #[error("line {line}: schema error in field `{field}`: {message}")]
    Schema {
        line: usize,
        field: &'static str,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value in `{tensor}`")]
    NonFinite { tensor: String },

    #[error("{0}")]
    Model(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether this error stems from input data rather than from how the tool was invoked.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Config(_))
    }
}
