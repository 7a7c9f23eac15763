use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed keypoint document at frame {frame}: {msg}")]
    Parse { frame: usize, msg: String },
    #[error("structural error at frame {frame}: {msg}")]
    Structure { frame: usize, msg: String },
    #[error("empty sequence: {0}")]
    EmptySequence(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("batch error: {0}")]
    Batch(String),
    #[error("sequence too short: {0}")]
    SequenceTooShort(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("cannot build split: {0}")]
    Split(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("AUC undefined: {0}")]
    UndefinedAuc(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable identifier used in machine-parseable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Structure { .. } => "structure",
            Error::EmptySequence(_) => "empty_sequence",
            Error::Config(_) => "config",
            Error::Batch(_) => "batch",
            Error::SequenceTooShort(_) => "sequence_too_short",
            Error::Shape(_) => "shape",
            Error::Data(_) => "data",
            Error::Usage(_) => "usage",
            Error::Split(_) => "split",
            Error::Training(_) => "training",
            Error::UndefinedAuc(_) => "undefined_auc",
            Error::Checkpoint(_) => "checkpoint",
            Error::Internal(_) => "internal",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
