use std::path::PathBuf;

use thiserror::Error;

use crate::simcore::EntityId;

pub type Result<T, E = BvrError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum BvrError {
    #[error("simulation fault: {0}")]
    SimulationFault(String),

    #[error("aircraft {0} is not alive")]
    DeadActor(EntityId),

    #[error("unknown entity {0}")]
    UnknownEntity(EntityId),

    #[error("episode already finished")]
    EpisodeDone,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite loss at learner step {step}: {detail}")]
    NonFiniteLoss { step: u64, detail: String },

    #[error("replay population {population} smaller than batch {batch}")]
    InsufficientSamples { population: usize, batch: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("config parse error at line {line}, column {column}: {message}")]
    ConfigParse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("checkpoint CRC mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    CrcMismatch { stored: u32, computed: u32 },

    #[error("episode log error at line {line}: {message}")]
    Log { line: usize, message: String },

    #[error("replay diverged at tick {tick}: {detail}")]
    ReplayMismatch { tick: u64, detail: String },

    #[error("session error {code}: {message}")]
    Session { code: String, message: String },

    #[error("io error on {path}: {source}")]
    PathIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl BvrError {
    pub fn path_io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BvrError::PathIo {
            path: path.into(),
            source,
        }
    }
}
