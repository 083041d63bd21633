//! One configurable encoder that realizes all six variants, with the
//! classification, pretraining and replaced-token-detection heads.

mod config;
mod encoder;
mod params;

pub use config::{EncoderConfig, Mixing, Variant};
pub use encoder::{
    build_model, count_parameters, ElectraLosses, EncoderModel, ForwardOutput, Hidden, Pass, SequenceInput,
    ELECTRA_DISC_WEIGHT,
};
pub use params::{NamedParam, ParamId, ParamStore};

use thiserror::Error;

use crate::objectives::{ObjectiveError, ObjectiveKind};
use crate::tensor::TensorError;

/// A config invariant violation, naming the offending field.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid `{field}`: {message}")]
pub struct ConfigError {
    pub field: &'static str,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: &'static str, message: impl Into<String>) -> Self {
        Self {
            field,
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error("token id {id} outside vocabulary of {vocab_size}")]
    TokenOutOfRange { id: usize, vocab_size: usize },
    #[error("sequence of {len} tokens exceeds max_positions {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("expected a {expected:?} objective, got {got:?}")]
    WrongObjective { expected: ObjectiveKind, got: ObjectiveKind },
    #[error("{variant} has no {head} head")]
    MissingHead { variant: Variant, head: &'static str },
    #[error("empty batch")]
    EmptyBatch,
}
