use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical divergence at step {step}: non-finite value in field `{field}`")]
    Divergence { step: u64, field: &'static str },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("duplicate payload for variable `{variable}` step {step}")]
    DuplicatePayload { variable: String, step: u64 },

    #[error("unknown variable `{0}` in staging")]
    UnknownVariable(String),

    #[error("payload for variable `{variable}` step {step} is not staged")]
    MissingPayload { variable: String, step: u64 },

    #[error("simulation schedule did not terminate: {0}")]
    Schedule(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
