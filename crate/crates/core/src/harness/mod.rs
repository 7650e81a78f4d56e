//! Configuration, data loading, training, evaluation, checkpoints and the
//! n-gram baseline.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod evaluate;
pub mod network;
pub mod ngram;
pub mod train;

pub use checkpoint::{Checkpoint, CheckpointError, ProbeReport};
pub use config::{parse_config_file, RunConfig, Task, CONFIG_KEYS};
pub use data::{encode_records, Example, Vocabularies};
pub use evaluate::{complete, evaluate, Evaluation};
pub use network::{Network, TaskHead};
pub use ngram::{evaluate_ngram, NgramModel};
pub use train::{compare_alphas, train, AlphaRanking, EpochLog, TrainOutcome};

use thiserror::Error;

use crate::ast::AstError;
use crate::metrics::MetricError;
use crate::model::ModelError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    /// Process exit status: 2 config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Data(_) | HarnessError::Checkpoint(_) | HarnessError::Io { .. } => 3,
            HarnessError::Numeric(_) => 4,
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

impl From<AstError> for HarnessError {
    fn from(e: AstError) -> Self {
        match e {
            AstError::Config(m) => HarnessError::Config(m),
            other => HarnessError::Data(other.to_string()),
        }
    }
}

impl From<TensorError> for HarnessError {
    fn from(e: TensorError) -> Self {
        match e {
            TensorError::NonFinite { .. } => HarnessError::Numeric(e.to_string()),
            other => HarnessError::Data(other.to_string()),
        }
    }
}

impl From<ModelError> for HarnessError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Tensor(t) => t.into(),
            other => HarnessError::Data(other.to_string()),
        }
    }
}

impl From<MetricError> for HarnessError {
    fn from(e: MetricError) -> Self {
        HarnessError::Data(e.to_string())
    }
}
