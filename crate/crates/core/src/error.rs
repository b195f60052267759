use thiserror::Error;

/// Errors raised anywhere in the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("head {head} out of range for a network with {heads} heads")]
    HeadOutOfRange { head: usize, heads: usize },
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid task spec `{name}`: {reason}")]
    TaskSpec { name: String, reason: String },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("episode already finished after {0} steps")]
    EpisodeDone(usize),
    #[error("replay buffer holds {have} transitions, {need} required")]
    BufferUnderflow { have: usize, need: usize },
    #[error("buffer is empty")]
    EmptyBuffer,
    #[error("insufficient free capacity: {free} free parameters, {need} required for task {task}")]
    Capacity { task: usize, free: usize, need: usize },
    #[error("ill-defined metric: {0}")]
    IllDefined(String),
    #[error("index {index} out of range (len {len})")]
    Index { index: usize, len: usize },
    #[error("malformed input: {0}")]
    Format(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
