use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// Variants are grouped by the exit-code family the CLI maps them to:
/// configuration problems, data problems, and runtime failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header: {0}")]
    Header(String),

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("unknown survey year {0}")]
    UnknownYear(i32),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("field `{0}` has no observed levels in the training split")]
    NoObservedLevels(&'static str),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("input has a single class; both outcomes are required")]
    SingleClass,

    #[error("zero variance: {0}")]
    ZeroVariance(&'static str),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("singular linear system: {0}")]
    Singular(&'static str),

    #[error("stratum {0} has a single primary sampling unit")]
    LonelyPsu(i64),

    #[error("model file: {0}")]
    Model(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse error family, used to pick a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Runtime,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Stage { source, .. } => source.kind(),
            Error::Config(_) => ErrorKind::Config,
            Error::Io { .. }
            | Error::Header(_)
            | Error::Row { .. }
            | Error::InvalidRecord(_)
            | Error::UnknownYear(_)
            | Error::Empty(_)
            | Error::NoObservedLevels(_)
            | Error::SingleClass
            | Error::LonelyPsu(_)
            | Error::Csv(_) => ErrorKind::Data,
            Error::Shape(_)
            | Error::ZeroVariance(_)
            | Error::NonFiniteLoss { .. }
            | Error::Singular(_)
            | Error::Model(_)
            | Error::Json(_) => ErrorKind::Runtime,
        }
    }
}
