use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("gaze track is empty")]
    EmptyTrack,

    #[error("raw gaze file not found: {pointer}")]
    MissingGazeFile { pointer: String },

    #[error("invalid session: {0}")]
    Validation(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("model configuration error: {0}")]
    Config(String),

    #[error("invalid run configuration: {0}")]
    RunConfig(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite loss in batch {batch}")]
    NonFinite { batch: usize },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("model run with seed {seed} failed: {source}")]
    ModelRun {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-parseable category, used by the CLI on failure.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => "parse",
            Error::EmptyTrack => "empty-track",
            Error::MissingGazeFile { .. } => "missing-file",
            Error::Validation(_) => "validation",
            Error::Parameter(_) => "parameter",
            Error::Config(_) | Error::RunConfig(_) => "config",
            Error::Shape(_) => "shape",
            Error::NonFinite { .. } => "numeric",
            Error::UndefinedMetric(_) => "metric",
            Error::ModelRun { source, .. } => source.category(),
            Error::Checkpoint(_) => "checkpoint",
            Error::Io { .. } => "io",
        }
    }
}
