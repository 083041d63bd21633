//! The benchmark harness behind the `bench` binary: spec files, the
//! variant × activation matrix runner, reports, plots, gradient checks,
//! model artifacts and corpus utilities.

mod artifact;
mod corpus_tools;
pub mod gradcheck;
mod plot;
mod predict;
mod report;
mod runner;
mod spec;

pub use artifact::ModelArtifact;
pub use corpus_tools::{inspect_corpus, synth_to_csv, CorpusStats};
pub use gradcheck::{run_gradcheck, CheckItem, GradcheckOptions, GradcheckReport};
pub use plot::{best_activation, plot_report, summary_svg, variant_svg};
pub use predict::{predict_file, read_unlabeled, PredictionRow, PredictionSummary};
pub use report::{
    parse_markdown, read_csv_rows, write_csv_rows, write_markdown, BenchReport, CellReport, DatasetSummary,
    PretrainRecord, ReportRow, CSV_HEADER,
};
pub use runner::{effective_threads, prepare_data, run_cell, run_matrix, write_outputs, PreparedData, RunOutcome};
pub use spec::{BenchSpec, CellPlan, DataKind, DataSpec, ModelOverrides, PretrainSpec, TrainOverrides};

use std::path::PathBuf;

use thiserror::Error;

use crate::data::DataError;

/// Rejected spec file; maps to exit code 2.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("cannot read spec {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("spec syntax: {0}")]
    Parse(String),
    #[error("spec field `{field}`: {message}")]
    Field { field: String, message: String },
}

impl SpecError {
    pub fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        SpecError::Field {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("model artifact: {0}")]
    Artifact(String),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

impl BenchError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.into(),
            source,
        }
    }

    /// CLI exit status: 2 for spec validation, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Spec(_) => 2,
            _ => 1,
        }
    }
}
