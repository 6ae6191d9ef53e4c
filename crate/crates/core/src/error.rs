use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("unknown column `{column}`; expected header: {expected}")]
    UnknownColumn { column: String, expected: String },

    #[error("missing required column `{column}`; expected header: {expected}")]
    MissingColumn { column: String, expected: String },

    #[error("no time overlap: indoor [{indoor_start}, {indoor_end}] vs weather [{weather_start}, {weather_end}]")]
    NoOverlap {
        indoor_start: i64,
        indoor_end: i64,
        weather_start: i64,
        weather_end: i64,
    },

    #[error("feature `{0}` is missing and has no imputation rule")]
    MissingFeature(String),

    #[error("schema incompatible with data, missing features: {missing:?} (add imputation rules for them)")]
    IncompatibleSchema { missing: Vec<String> },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Checkpoint(#[from] crate::nn::checkpoint::CheckpointError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
