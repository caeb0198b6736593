use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("parse file: {0}")]
    Parse(String),

    #[error("sample {sample}, utterance {utterance}: {message}")]
    Mismatch {
        sample: usize,
        utterance: usize,
        message: String,
    },

    #[error("invalid edit script: {0}")]
    Script(String),

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch} (samples {samples:?})")]
    NonFinite {
        epoch: usize,
        batch: usize,
        samples: Vec<usize>,
    },

    #[error("request failed after {attempts} attempt(s): {message}")]
    Request {
        attempts: u32,
        status: Option<u16>,
        message: String,
    },

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

    /// True for errors caused by bad input data or configuration, as opposed
    /// to failures inside the pipeline itself.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Record { .. }
                | Error::Parse(_)
                | Error::Mismatch { .. }
                | Error::Invalid(_)
                | Error::Config(_)
                | Error::Checkpoint(_)
                | Error::Json(_)
        )
    }
}
