use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("non-finite value in `{param}`")]
    NonFinite { param: String },

    #[error("unknown item `{0}`")]
    UnknownItem(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("ingestion failed, unknown item ids: {}", .0.join(", "))]
    Ingestion(Vec<String>),

    #[error("config error: {0}")]
    Config(String),

    #[error("up-sampling unsatisfiable: {0}")]
    Unsatisfiable(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("training diverged at round {round}, step {step}: {what}")]
    Divergence { round: usize, step: usize, what: String },

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: String, expected: String },

    #[error("checkpoint checksum mismatch")]
    CheckpointChecksum,

    #[error("checkpoint truncated: {0}")]
    CheckpointTruncated(String),

    #[error("checkpoint malformed: {0}")]
    CheckpointMalformed(String),

    #[error("dimension mismatch: {what} is {found}, expected {expected}")]
    Dimension {
        what: String,
        found: usize,
        expected: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 config/contract, 3 data, 4 numeric divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Shape(_)
            | Error::Contract(_)
            | Error::Config(_)
            | Error::Unsatisfiable(_)
            | Error::Dimension { .. } => 2,
            Error::NonFinite { .. } | Error::Divergence { .. } => 4,
            Error::UnknownItem(_)
            | Error::Parse { .. }
            | Error::Ingestion(_)
            | Error::UndefinedMetric(_)
            | Error::CheckpointVersion { .. }
            | Error::CheckpointChecksum
            | Error::CheckpointTruncated(_)
            | Error::CheckpointMalformed(_)
            | Error::Io { .. } => 3,
        }
    }
}
