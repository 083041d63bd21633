//! Judgment corpus ingestion, vocabulary, encoding and splitting.

mod corpus;
mod encode;
mod split;
mod vocab;

pub use corpus::{ingest_csv, read_csv, synth_corpus, write_csv, JudgmentRecord, Label};
pub use encode::{encode, encode_ids, Encoded, TokenBatch, MAX_POSITIONS};
pub use split::split_80_20;
pub use vocab::{build_vocab, tokenize, Vocab, CLS, MASK, NUM_SPECIAL, PAD, SEP, SPECIAL_TOKENS, UNK};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing required column {0:?}")]
    MissingColumn(&'static str),
    #[error("row {row}: unknown judgment label {value:?} (expected petitioner or respondent)")]
    UnknownLabel { row: usize, value: String },
    #[error("row {row}: empty context")]
    EmptyContext { row: usize },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("vocabulary max_size must exceed the {NUM_SPECIAL} reserved tokens, got {0}")]
    VocabTooSmall(usize),
    #[error("need at least {need} records, got {got}")]
    TooFewRecords { need: usize, got: usize },
    #[error("malformed vocabulary file: {0}")]
    BadVocab(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
