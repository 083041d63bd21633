use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::report::{BenchReport, CellReport};
use super::BenchError;
use crate::model::Variant;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Highest final accuracy, ties to the lower final validation loss.
pub fn best_activation<'a>(cells: impl IntoIterator<Item = &'a CellReport>) -> Option<&'a CellReport> {
    cells
        .into_iter()
        .filter(|c| c.train.is_some())
        .fold(None, |best: Option<&CellReport>, c| {
            let key = |c: &CellReport| {
                let last = c.train.as_ref().expect("filtered").last();
                (last.val_accuracy, -last.val_loss)
            };
            match best {
                Some(b) if key(b) >= key(c) => Some(b),
                _ => Some(c),
            }
        })
}

struct Series<'a> {
    name: String,
    color: &'a str,
    values: Vec<f64>,
}

/// Plot area: left, top, width, height.
#[derive(Clone, Copy)]
struct Frame(f64, f64, f64, f64);

fn chart(title: &str, y_label: &str, y_max: f64, series: &[Series<'_>], frame: Frame) -> String {
    let Frame(x0, y0, w, h) = frame;
    let mut s = String::new();
    let epochs = series.iter().map(|s| s.values.len()).max().unwrap_or(1).max(1);
    let px = |i: usize| x0 + if epochs > 1 { w * i as f64 / (epochs - 1) as f64 } else { w / 2.0 };
    let py = |v: f64| y0 + h - h * (v / y_max).clamp(0.0, 1.0);
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="14" text-anchor="middle">{title}</text>"#, x0 + w / 2.0, y0 - 12.0);
    let _ = writeln!(
        s,
        r##"<rect x="{x0:.1}" y="{y0:.1}" width="{w:.1}" height="{h:.1}" fill="none" stroke="#888"/>"##
    );
    for k in 0..=4 {
        let v = y_max * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{v:.2}</text>"#,
            x0 - 4.0,
            py(v) + 3.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">epoch (1-{epochs})</text>"#,
        x0 + w / 2.0,
        y0 + h + 16.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-size="10" transform="rotate(-90 {:.1} {:.1})" text-anchor="middle">{y_label}</text>"#,
        x0 - 34.0,
        y0 + h / 2.0,
        x0 - 34.0,
        y0 + h / 2.0
    );
    for (k, ser) in series.iter().enumerate() {
        let points: Vec<String> = ser
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| format!("{:.2},{:.2}", px(i), py(v)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline data-series="{}" fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            ser.name,
            ser.color,
            points.join(" ")
        );
        let ly = y0 + 14.0 + 14.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{ly:.1}" font-size="10" fill="{}">{}</text>"#,
            x0 + w - 90.0,
            ser.color,
            ser.name
        );
    }
    s
}

fn document(width: f64, height: f64, body: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{body}</svg>\n"
    )
}

/// Validation accuracy per epoch, one line per activation.
pub fn variant_svg(variant: Variant, cells: &[&CellReport]) -> String {
    let series: Vec<Series<'_>> = cells
        .iter()
        .filter_map(|c| c.train.as_ref().map(|t| (c, t)))
        .enumerate()
        .map(|(k, (c, t))| Series {
            name: c.activation.display_label().to_string(),
            color: COLORS[k % COLORS.len()],
            values: t.epochs.iter().map(|e| e.val_accuracy).collect(),
        })
        .collect();
    let title = format!("{} accuracy by activation", variant.display_label());
    let body = chart(&title, "accuracy", 1.0, &series, Frame(MARGIN, MARGIN, WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN));
    document(WIDTH, HEIGHT, &body)
}

/// One panel per variant: accuracy and both losses of its best activation.
pub fn summary_svg(report: &BenchReport) -> String {
    let variants = variants_in(report);
    let cols = 3usize;
    let rows = variants.len().div_ceil(cols).max(1);
    let (pw, ph) = (WIDTH * 0.75, HEIGHT * 0.75);
    let mut body = String::new();
    for (k, &v) in variants.iter().enumerate() {
        let Some(best) = best_activation(report.cells.iter().filter(|c| c.variant == v)) else {
            continue;
        };
        let t = best.train.as_ref().expect("best has a report");
        let max_loss = t
            .epochs
            .iter()
            .flat_map(|e| [e.train_loss, e.val_loss])
            .fold(1.0, f64::max);
        let series = [
            Series {
                name: "accuracy".into(),
                color: COLORS[0],
                values: t.epochs.iter().map(|e| e.val_accuracy).collect(),
            },
            Series {
                name: "train loss".into(),
                color: COLORS[1],
                values: t.epochs.iter().map(|e| e.train_loss).collect(),
            },
            Series {
                name: "val loss".into(),
                color: COLORS[2],
                values: t.epochs.iter().map(|e| e.val_loss).collect(),
            },
        ];
        let (cx, cy) = ((k % cols) as f64 * pw, (k / cols) as f64 * ph);
        body.push_str(&chart(
            &best.label(),
            "value",
            max_loss,
            &series,
            Frame(cx + MARGIN, cy + MARGIN, pw - 1.5 * MARGIN, ph - 2.0 * MARGIN),
        ));
    }
    document(pw * cols as f64, ph * rows as f64, &body)
}

fn variants_in(report: &BenchReport) -> Vec<Variant> {
    let mut out: Vec<Variant> = Vec::new();
    for c in &report.cells {
        if !out.contains(&c.variant) {
            out.push(c.variant);
        }
    }
    out
}

/// Reads report.json and writes `accuracy_<variant>.svg` per variant plus
/// `best_activation.svg`.
pub fn plot_report(report_path: &Path, out_dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    let text = fs::read_to_string(report_path).map_err(|e| BenchError::io(report_path, e))?;
    let report = BenchReport::from_json(&text).map_err(|e| BenchError::Format {
        path: report_path.to_path_buf(),
        message: e.to_string(),
    })?;
    fs::create_dir_all(out_dir).map_err(|e| BenchError::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut emit = |name: String, svg: String| -> Result<(), BenchError> {
        let p = out_dir.join(name);
        fs::write(&p, svg).map_err(|e| BenchError::io(&p, e))?;
        written.push(p);
        Ok(())
    };
    for v in variants_in(&report) {
        let cells: Vec<&CellReport> = report.cells.iter().filter(|c| c.variant == v).collect();
        emit(format!("accuracy_{v}.svg"), variant_svg(v, &cells))?;
    }
    emit("best_activation.svg".into(), summary_svg(&report))?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::ActivationKind;
    use crate::train::{EpochRecord, TrainReport};

    fn cell(a: ActivationKind, acc: f64, loss: f64) -> CellReport {
        let epochs = (1..=3)
            .map(|e| EpochRecord {
                epoch: e,
                train_loss: loss,
                val_loss: loss,
                val_accuracy: acc,
                seconds: 0.0,
            })
            .collect();
        CellReport {
            variant: Variant::Bert,
            activation: a,
            seed: 0,
            parameters: 0,
            attention_dropout: 0.3,
            epochs: 3,
            pretrain: None,
            seconds: 0.0,
            train: Some(TrainReport {
                epochs,
                best_epoch: 1,
                confidence_histogram: vec![0; 10],
                abstentions: 0,
                abstain_threshold: 0.6,
            }),
            error: None,
        }
    }

    #[test]
    fn best_breaks_ties_on_val_loss() {
        let cells = [
            cell(ActivationKind::Relu, 0.8, 0.3),
            cell(ActivationKind::Gelu, 0.9, 0.5),
            cell(ActivationKind::Silu, 0.9, 0.4),
        ];
        assert_eq!(best_activation(&cells).unwrap().activation, ActivationKind::Silu);
    }

    #[test]
    fn one_polyline_per_activation_with_every_epoch() {
        let cells = [cell(ActivationKind::Relu, 0.5, 0.7), cell(ActivationKind::Gelu, 0.6, 0.6)];
        let refs: Vec<&CellReport> = cells.iter().collect();
        let svg = variant_svg(Variant::Bert, &refs);
        let lines: Vec<&str> = svg.lines().filter(|l| l.starts_with("<polyline")).collect();
        assert_eq!(lines.len(), 2);
        for l in lines {
            let points = l.split("points=\"").nth(1).unwrap().trim_end_matches("\"/>");
            assert_eq!(points.split(' ').count(), 3);
        }
    }
}
