use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("impossible skew in {split} split: {per_emotion} samples per emotion at ratio {ratio} leaves fewer than one minority sample")]
    ImpossibleSkew {
        split: String,
        per_emotion: usize,
        ratio: f64,
    },

    #[error("{path}:{line}: field `{field}`: {message}")]
    Record {
        path: String,
        line: usize,
        field: String,
        message: String,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("class `{0}` has no positive samples")]
    EmptyClass(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("invalid training config: {0}")]
    InvalidConfig(String),

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("invalid partition ratio `{0}`: shares must sum to 10 with guiding >= 1 and contrary >= 1")]
    InvalidRatio(String),

    #[error("missing loss for sample `{id}` in emotion {emotion}")]
    MissingLoss { id: String, emotion: usize },

    #[error("conversion failed: {0}")]
    Conversion(String),

    #[error("external converter failed for {} job(s): {}", .0.len(), .0.join("; "))]
    ConverterJobs(Vec<String>),

    #[error("undefined TPR cell(s): {}", .0.join(", "))]
    UndefinedTprCells(Vec<String>),

    #[error("invalid evaluation batch: {0}")]
    InvalidBatch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("stage `{stage}` failed for seed {seed}: {source}")]
    Stage {
        stage: &'static str,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user configuration rather than a failing stage.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::InvalidSpec(_) | Error::InvalidConfig(_) | Error::InvalidRatio(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
