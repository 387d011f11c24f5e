use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("config file not found: {}", .0.display())]
    ConfigNotFound(PathBuf),

    #[error("config line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("guidance endpoint lies behind the ego vehicle")]
    EndpointBehind,

    #[error("guidance exhausted: the ego vehicle passed every target point")]
    GuidanceExhausted,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("trajectory: {0}")]
    Trajectory(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
