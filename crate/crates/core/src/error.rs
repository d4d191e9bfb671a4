use std::path::PathBuf;

use crate::level::Level;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("level id {0} is outside 1..=5")]
    InvalidLevel(u8),

    #[error("judgement source exhausted for level {0}")]
    SourceExhausted(Level),

    #[error("episode finished; call reset before stepping again")]
    EpisodeFinished,

    #[error("episode not started; call reset first")]
    NotStarted,

    #[error("action slot {0} is outside the canonical action space")]
    SlotOutOfRange(usize),

    #[error("action slot {slot} is not a valid choice at level {level}")]
    InvalidAction { slot: usize, level: Level },

    #[error("level {level} expects {expected} confidences, got {got}")]
    ConfidenceLength { level: Level, expected: usize, got: usize },

    #[error("invalid judgement record: {0}")]
    InvalidRecord(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid confusion spec: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("action mask has no valid slot")]
    EmptyMask,

    #[error("observation length {got} does not match the policy input size {expected}")]
    ObservationShape { expected: usize, got: usize },

    #[error("non-finite value during training: {0}")]
    NonFinite(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
