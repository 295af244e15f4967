use std::path::PathBuf;

use thiserror::Error;

/// A rejected configuration value, keyed by its dotted path (`server.tau`).
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{key}: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn invalid(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoverError {
    #[error("coordinate {0} uncovered")]
    Uncovered(usize),
    #[error("group {group} references coordinate {coordinate} outside [0, {d})")]
    OutOfRange {
        group: usize,
        coordinate: usize,
        d: usize,
    },
    #[error("group {0} is empty")]
    EmptyGroup(usize),
    #[error("reverse index inconsistent at coordinate {0}")]
    InconsistentIndex(usize),
    #[error("row_col cover needs a 2-D shape, got {0:?}")]
    NotMatrix(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("optimizer kind {0} requires a cover")]
    MissingCover(&'static str),
    #[error("cover spans {cover} coordinates but the model has {model}")]
    CoverSize { cover: usize, model: usize },
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("non-finite gradient from client {client} in round {round} at local step {step}")]
    Divergence {
        round: u64,
        client: usize,
        step: usize,
    },
    #[error("non-finite server state after round {0}")]
    ServerDivergence(u64),
    #[error("round {0} produced no client deltas")]
    EmptyRound(u64),
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed rows:\n{}", .problems.join("\n"))]
    Malformed {
        path: PathBuf,
        problems: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("need at least {need} points, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("non-positive value {value} at index {index}")]
    NonPositive { index: usize, value: f64 },
}
