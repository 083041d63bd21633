use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::activations::ActivationKind;
use crate::model::Variant;
use crate::train::{PretrainObjective, TrainReport};

pub const CSV_HEADER: &str = "variant,activation,train_loss,val_loss,accuracy,best_epoch,seconds";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub source: String,
    pub records: usize,
    pub train: usize,
    pub validation: usize,
    pub vocab_size: usize,
    pub max_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainRecord {
    pub objective: PretrainObjective,
    /// Mean loss per pretraining epoch.
    pub losses: Vec<f64>,
}

/// Everything recorded for one matrix cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub variant: Variant,
    pub activation: ActivationKind,
    pub seed: u64,
    pub parameters: usize,
    pub attention_dropout: f64,
    pub epochs: usize,
    pub pretrain: Option<PretrainRecord>,
    /// Wall-clock seconds for the whole cell; 0 when timing is off.
    pub seconds: f64,
    pub train: Option<TrainReport>,
    pub error: Option<String>,
}

impl CellReport {
    pub fn label(&self) -> String {
        format!("{}-{}", self.variant.display_label(), self.activation.display_label())
    }

    pub fn row(&self) -> ReportRow {
        let last = self.train.as_ref().map(|t| (t.last(), t.best_epoch));
        ReportRow {
            variant: self.variant,
            activation: self.activation,
            train_loss: last.map(|(r, _)| round(r.train_loss, 6)),
            val_loss: last.map(|(r, _)| round(r.val_loss, 6)),
            accuracy: last.map(|(r, _)| round(r.val_accuracy, 6)),
            best_epoch: last.map(|(_, b)| b),
            seconds: round(self.seconds, 3),
        }
    }
}

/// One summary-table row. Empty fields mark a failed cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub variant: Variant,
    pub activation: ActivationKind,
    pub train_loss: Option<f64>,
    pub val_loss: Option<f64>,
    pub accuracy: Option<f64>,
    pub best_epoch: Option<usize>,
    pub seconds: f64,
}

impl ReportRow {
    pub fn label(&self) -> String {
        format!("{}-{}", self.variant.display_label(), self.activation.display_label())
    }
}

fn round(x: f64, digits: i32) -> f64 {
    let scale = 10f64.powi(digits);
    (x * scale).round() / scale
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub seed: u64,
    pub dataset: DatasetSummary,
    pub rows: Vec<ReportRow>,
    pub cells: Vec<CellReport>,
}

impl BenchReport {
    pub fn new(seed: u64, dataset: DatasetSummary, cells: Vec<CellReport>) -> Self {
        Self {
            seed,
            dataset,
            rows: cells.iter().map(CellReport::row).collect(),
            cells,
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &CellReport> {
        self.cells.iter().filter(|c| c.error.is_some())
    }

    pub fn cell(&self, variant: Variant, activation: ActivationKind) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.variant == variant && c.activation == activation)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        write_csv_rows(&self.rows, &mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf-8")
    }

    pub fn to_markdown(&self) -> String {
        let mut buf = Vec::new();
        write_markdown(self, &mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf-8")
    }
}

pub fn write_csv_rows<W: Write>(rows: &[ReportRow], writer: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(CSV_HEADER.split(','))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv_rows<R: Read>(reader: R) -> csv::Result<Vec<ReportRow>> {
    csv::Reader::from_reader(reader).deserialize().collect()
}

fn cell_text<T: ToString>(x: Option<T>) -> String {
    x.map_or_else(|| "failed".to_string(), |v| v.to_string())
}

/// Markdown summary table, then failure notes.
pub fn write_markdown<W: Write>(report: &BenchReport, mut w: W) -> std::io::Result<()> {
    writeln!(w, "| Model | Training Loss | Validation Loss | Accuracy | Best Epoch | Seconds |")?;
    writeln!(w, "|---|---:|---:|---:|---:|---:|")?;
    for r in &report.rows {
        writeln!(
            w,
            "| {} | {} | {} | {} | {} | {} |",
            r.label(),
            cell_text(r.train_loss),
            cell_text(r.val_loss),
            cell_text(r.accuracy),
            cell_text(r.best_epoch),
            r.seconds
        )?;
    }
    let failures: Vec<&CellReport> = report.failures().collect();
    if !failures.is_empty() {
        writeln!(w)?;
        for c in failures {
            writeln!(w, "- {}: {}", c.label(), c.error.as_deref().unwrap_or_default())?;
        }
    }
    Ok(())
}

fn parse_label(label: &str) -> Option<(Variant, ActivationKind)> {
    let (v, a) = label.split_once('-')?;
    let variant = Variant::ALL.into_iter().find(|x| x.display_label() == v)?;
    let activation = ActivationKind::ALL.into_iter().find(|x| x.display_label() == a)?;
    Some((variant, activation))
}

/// Reads the rows back from [`write_markdown`] output.
pub fn parse_markdown(text: &str) -> Result<Vec<ReportRow>, String> {
    fn opt<T: std::str::FromStr>(s: &str) -> Result<Option<T>, String> {
        if s == "failed" {
            return Ok(None);
        }
        s.parse().map(Some).map_err(|_| format!("bad number {s:?}"))
    }
    text.lines()
        .skip(2)
        .take_while(|l| l.starts_with('|'))
        .map(|line| {
            let f: Vec<&str> = line.trim_matches('|').split('|').map(str::trim).collect();
            if f.len() != 6 {
                return Err(format!("expected 6 columns in {line:?}"));
            }
            let (variant, activation) = parse_label(f[0]).ok_or_else(|| format!("bad model label {:?}", f[0]))?;
            Ok(ReportRow {
                variant,
                activation,
                train_loss: opt(f[1])?,
                val_loss: opt(f[2])?,
                accuracy: opt(f[3])?,
                best_epoch: opt(f[4])?,
                seconds: f[5].parse().map_err(|_| format!("bad seconds {:?}", f[5]))?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: Variant, a: ActivationKind, ok: bool) -> ReportRow {
        ReportRow {
            variant: v,
            activation: a,
            train_loss: ok.then_some(0.177),
            val_loss: ok.then_some(0.416),
            accuracy: ok.then_some(0.85),
            best_epoch: ok.then_some(12),
            seconds: 1.5,
        }
    }

    #[test]
    fn csv_header_and_failed_row() {
        let rows = vec![
            row(Variant::Xlnet, ActivationKind::Gelu, true),
            row(Variant::Fnet, ActivationKind::Relu, false),
        ];
        let mut buf = Vec::new();
        write_csv_rows(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "variant,activation,train_loss,val_loss,accuracy,best_epoch,seconds\n\
             xlnet,gelu,0.177,0.416,0.85,12,1.5\n\
             fnet,relu,,,,,1.5\n"
        );
        assert_eq!(read_csv_rows(text.as_bytes()).unwrap(), rows);
    }

    #[test]
    fn labels_round_trip() {
        for v in Variant::ALL {
            for a in ActivationKind::ALL {
                assert_eq!(parse_label(&row(v, a, true).label()), Some((v, a)));
            }
        }
        assert_eq!(row(Variant::Xlnet, ActivationKind::GeluNew, true).label(), "XLNET-GeLu-New");
    }
}
