use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use super::report::{BenchReport, CellReport, DatasetSummary, PretrainRecord};
use super::spec::{BenchSpec, CellPlan, DataKind};
use super::{BenchError, ModelArtifact};
use crate::data::{build_vocab, ingest_csv, split_80_20, synth_corpus, JudgmentRecord, Vocab};
use crate::model::{build_model, EncoderModel};
use crate::train::{pretrain, EncodedSet, Trainer};

/// Corpus split, vocabulary and encodings shared read-only by every cell.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub summary: DatasetSummary,
    pub vocab: Vocab,
    pub train_records: Vec<JudgmentRecord>,
    pub train: EncodedSet,
    pub validation: EncodedSet,
}

pub fn prepare_data(spec: &BenchSpec) -> Result<PreparedData, BenchError> {
    let d = &spec.data;
    let (records, source) = match d.source {
        DataKind::Synth => (synth_corpus(d.n, d.seed), format!("synth(n={}, seed={})", d.n, d.seed)),
        DataKind::Csv => {
            let path = d.path.as_ref().expect("validated spec has a csv path");
            (ingest_csv(path)?, path.display().to_string())
        }
    };
    let (train_records, val_records) = split_80_20(&records, spec.seed)?;
    let vocab = build_vocab(&train_records, d.vocab_size)?;
    Ok(PreparedData {
        summary: DatasetSummary {
            source,
            records: records.len(),
            train: train_records.len(),
            validation: val_records.len(),
            vocab_size: vocab.len(),
            max_len: d.max_len,
        },
        train: EncodedSet::from_records(&train_records, &vocab, d.max_len),
        validation: EncodedSet::from_records(&val_records, &vocab, d.max_len),
        vocab,
        train_records,
    })
}

/// Parallelism after the `BENCH_THREADS` cap, at least 1.
pub fn effective_threads(requested: usize, cells: usize) -> usize {
    let cap = std::env::var("BENCH_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(usize::MAX);
    requested.min(cap).min(cells).max(1)
}

type CellResult = (CellReport, Option<EncoderModel>);

/// Trains one cell. Errors and panics are captured in the report.
pub fn run_cell(plan: &CellPlan, data: &PreparedData, timing: bool) -> CellResult {
    let start = Instant::now();
    let mut pretrain_record = None;
    let outcome = catch_unwind(AssertUnwindSafe(|| -> Result<_, String> {
        let mut model = build_model(&plan.encoder, plan.seed).map_err(|e| e.to_string())?;
        if let Some((objective, epochs)) = plan.pretrain {
            let losses = pretrain(&mut model, &data.train_records, &data.vocab, objective, epochs, &plan.train)
                .map_err(|e| format!("pretraining: {e}"))?;
            pretrain_record = Some(PretrainRecord { objective, losses });
        }
        Trainer::new(model, data.train.clone(), data.validation.clone(), plan.train.clone())
            .and_then(|t| t.timed(timing).run())
            .map_err(|e| e.to_string())
    }))
    .unwrap_or_else(|panic| {
        let msg = panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "unknown panic".into());
        Err(format!("panicked: {msg}"))
    });
    let (model, train, error) = match outcome {
        Ok((m, r)) => (Some(m), Some(r), None),
        Err(e) => (None, None, Some(e)),
    };
    let cell = CellReport {
        variant: plan.variant,
        activation: plan.activation,
        seed: plan.seed,
        parameters: crate::model::count_parameters(&plan.encoder),
        attention_dropout: plan.train.attention_dropout,
        epochs: plan.train.epochs,
        pretrain: pretrain_record,
        seconds: if timing { start.elapsed().as_secs_f64() } else { 0.0 },
        train,
        error,
    };
    (cell, model)
}

/// A finished matrix: the report plus each cell's trained model.
pub struct RunOutcome {
    pub report: BenchReport,
    pub models: Vec<Option<EncoderModel>>,
    pub data: PreparedData,
}

/// Validates, prepares the data and runs every cell on up to
/// `effective_threads` workers. Results are merged in cell order.
pub fn run_matrix(spec: &BenchSpec) -> Result<RunOutcome, BenchError> {
    spec.validate()?;
    let data = prepare_data(spec)?;
    let plans = spec.cells(data.vocab.len())?;
    let threads = effective_threads(spec.parallelism, plans.len());
    let slots: Vec<Mutex<Option<CellResult>>> = plans.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let keep_models = spec.save_models;
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(plan) = plans.get(i) else { break };
                let (cell, model) = run_cell(plan, &data, spec.timing);
                *slots[i].lock().expect("slot lock") = Some((cell, model.filter(|_| keep_models)));
            });
        }
    });
    let (cells, models): (Vec<_>, Vec<_>) = slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("every cell ran"))
        .unzip();
    Ok(RunOutcome {
        report: BenchReport::new(spec.seed, data.summary.clone(), cells),
        models,
        data,
    })
}

fn write(path: &Path, text: &str) -> Result<(), BenchError> {
    fs::write(path, text).map_err(|e| BenchError::io(path, e))
}

/// Writes report.{csv,json,md}, per-cell curves and, when kept, model
/// artifacts under `spec.out_dir`. Returns the written paths.
pub fn write_outputs(spec: &BenchSpec, outcome: &RunOutcome) -> Result<Vec<PathBuf>, BenchError> {
    let out = &spec.out_dir;
    let curves = out.join("curves");
    fs::create_dir_all(&curves).map_err(|e| BenchError::io(&curves, e))?;
    let report = &outcome.report;
    let mut written = Vec::new();
    for (name, text) in [
        ("report.csv", report.to_csv()),
        ("report.json", report.to_json()),
        ("report.md", report.to_markdown()),
    ] {
        let p = out.join(name);
        write(&p, &text)?;
        written.push(p);
    }
    for cell in &report.cells {
        let Some(t) = &cell.train else { continue };
        let mut text = String::from("epoch,train_loss,val_loss,val_accuracy,seconds\n");
        for e in &t.epochs {
            text.push_str(&format!(
                "{},{},{},{},{}\n",
                e.epoch, e.train_loss, e.val_loss, e.val_accuracy, e.seconds
            ));
        }
        let p = curves.join(format!("{}_{}.csv", cell.variant, cell.activation));
        write(&p, &text)?;
        written.push(p);
    }
    if spec.save_models {
        let dir = out.join("models");
        fs::create_dir_all(&dir).map_err(|e| BenchError::io(&dir, e))?;
        for (cell, model) in report.cells.iter().zip(&outcome.models) {
            let Some(model) = model else { continue };
            let tau = cell.train.as_ref().map_or(0.6, |t| t.abstain_threshold);
            let p = dir.join(format!("{}_{}.json", cell.variant, cell.activation));
            ModelArtifact::new(model, &outcome.data.vocab, spec.data.max_len, tau).save(&p)?;
            written.push(p);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::ActivationKind;
    use crate::model::Variant;

    fn tiny_spec() -> BenchSpec {
        let mut spec = BenchSpec {
            variants: vec![Variant::Fnet, Variant::Bert],
            activations: vec![ActivationKind::Relu],
            ..BenchSpec::default()
        };
        spec.data.n = 20;
        spec.data.max_len = 32;
        spec.train.epochs = Some(2);
        spec.timing = false;
        spec
    }

    #[test]
    fn rows_sorted_and_complete() {
        let out = run_matrix(&tiny_spec()).unwrap();
        let labels: Vec<String> = out.report.rows.iter().map(|r| r.label()).collect();
        assert_eq!(labels, vec!["BERT-ReLu", "FNET-ReLu"]);
        assert_eq!(out.report.dataset.train, 16);
        for c in &out.report.cells {
            assert_eq!(c.train.as_ref().unwrap().epochs.len(), 2);
            assert_eq!(c.seconds, 0.0);
        }
        assert!(out.models.iter().all(Option::is_none));
    }

    #[test]
    fn writes_reports_curves_and_models() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = tiny_spec();
        spec.out_dir = dir.path().to_path_buf();
        spec.save_models = true;
        let out = run_matrix(&spec).unwrap();
        let files = write_outputs(&spec, &out).unwrap();
        assert_eq!(files.len(), 3 + 2 + 2);
        assert!(dir.path().join("models/fnet_relu.json").exists());
        let csv = fs::read_to_string(dir.path().join("curves/bert_relu.csv")).unwrap();
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn thread_cap() {
        assert_eq!(effective_threads(8, 3), 3);
        assert_eq!(effective_threads(0, 3), 1);
    }
}
