use std::path::PathBuf;

use numerics::NumericsError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("unknown entity class `{0}`")]
    UnknownClass(String),
    #[error("unknown {class} `{name}`")]
    UnknownEntity { class: &'static str, name: String },
    #[error("node id {0} is outside the catalog")]
    UnknownNode(usize),
    #[error("input is empty")]
    EmptyInput,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing gold annotations for {0}")]
    MissingGold(String),
    #[error("sequence of {len} tokens exceeds the maximum of {max}")]
    TooLong { len: usize, max: usize },
    #[error("graphs with {nodes} nodes exceed the exact limit of {limit}; use heuristic mode")]
    ExactLimit { nodes: usize, limit: usize },
    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
