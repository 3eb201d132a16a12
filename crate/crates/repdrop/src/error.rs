use std::path::PathBuf;

/// Errors produced by this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,

    #[error("sequence of length {len} is shorter than n = {n}")]
    SequenceTooShort { len: usize, n: usize },

    #[error("no qualifying sequences: {0}")]
    NoQualifyingSequences(String),

    #[error("shard count {k} exceeds document count {docs}")]
    TooManyShards { k: usize, docs: usize },

    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("sequence length {len} exceeds maximum {max}")]
    SequenceTooLong { len: usize, max: usize },

    #[error("empty prompt")]
    EmptyPrompt,

    #[error("non-finite loss at step {step}: {details}")]
    NonFiniteLoss { step: u64, details: String },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("undefined ratio: training rep-2 is zero")]
    UndefinedRatio,

    #[error("checkpoint format: {0}")]
    CheckpointFormat(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml: {0}")]
    Toml(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for errors caused by bad usage or configuration rather than a
    /// failure at run time. The CLI maps these to exit code 1.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Toml(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
