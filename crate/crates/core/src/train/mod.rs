//! Adam, the fine-tuning loop, evaluation, optional pretraining and the
//! verdict decision rule.

mod adam;
mod pretrain;
mod trainer;
mod verdict;

pub use adam::{adam_update, AdamConfig, AdamState};
pub use pretrain::{pretrain, PretrainObjective};
pub use trainer::{
    evaluate, train, Classifier, EncodedSet, EpochRecord, Evaluation, TrainConfig, TrainReport, Trainer,
    CONFIDENCE_BINS,
};
pub use verdict::{decide, predict_verdict, softmax, Prediction, Verdict};

use thiserror::Error;

use crate::model::{ConfigError, ModelError};
use crate::objectives::ObjectiveError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("epoch {epoch}, batch {batch}: {source}")]
    Batch {
        epoch: usize,
        batch: usize,
        #[source]
        source: ModelError,
    },
    #[error("non-finite gradient for parameter {param}")]
    NonFiniteGradient { param: String },
    #[error("gradient shape differs from parameter {param}")]
    GradientShape { param: String },
    #[error("empty {0} set")]
    EmptySet(&'static str),
    #[error("invalid train config `{field}`: {message}")]
    Config { field: &'static str, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

impl From<ConfigError> for TrainError {
    fn from(e: ConfigError) -> Self {
        TrainError::Model(ModelError::Config(e))
    }
}
