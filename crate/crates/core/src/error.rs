use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the engine can report.
///
/// Variants are grouped by the pipeline stage that raises them so callers
/// can map them to process exit codes with [`Error::kind`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: line {line}: {message}", .path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}: {message}", .path.display())]
    Format { path: PathBuf, message: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("class {class} has {available} samples, {requested} requested")]
    InsufficientClass {
        class: usize,
        available: usize,
        requested: usize,
    },

    #[error("cluster {cluster} has {size} members, {requested} requested")]
    ClusterTooSmall {
        cluster: usize,
        size: usize,
        requested: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("cold start failed: no labeled sample reached confidence {threshold}")]
    ColdStart { threshold: f64 },

    #[error("missing artifact {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse classification of an [`Error`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Divergence,
    ColdStart,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Config,
            Error::NonFinite { .. } => ErrorKind::Divergence,
            Error::ColdStart { .. } => ErrorKind::ColdStart,
            Error::Stage { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }

    /// Tags the error with the pipeline stage that raised it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            Error::Stage { .. } => self,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
