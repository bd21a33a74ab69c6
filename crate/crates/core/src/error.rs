use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("degenerate importance ratio: stored behaviour probability {stored_prob:e} at segment position {position}")]
    DegenerateRatio { stored_prob: f64, position: usize },

    #[error("segment {index}: {source}")]
    InSegment {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("replay buffer has no sampleable transitions yet")]
    NotReady,

    #[error("non-finite target {value} at batch row {row}")]
    NonFiniteTarget { row: usize, value: f64 },

    #[error("non-finite loss {loss} at episode {episode}, update {update} (max |target| {max_target:e})")]
    NonFiniteLoss {
        loss: f64,
        episode: usize,
        update: u64,
        max_target: f64,
    },

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("window of {window} episodes exceeds the {available} recorded")]
    WindowTooLarge { window: usize, available: usize },

    #[error("both samples have zero variance")]
    DegenerateVariance,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("snapshot: {0}")]
    Snapshot(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
