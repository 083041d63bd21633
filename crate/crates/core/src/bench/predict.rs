use std::collections::HashMap;
use std::path::Path;

use serde::Serialize;

use super::{BenchError, ModelArtifact};
use crate::data::{encode, Encoded, Label, TokenBatch};
use crate::train::{decide, softmax, Verdict};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionRow {
    pub title: String,
    pub verdict: Verdict,
    pub confidence: f64,
    pub gold: Option<Label>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PredictionSummary {
    pub petitioner: usize,
    pub respondent: usize,
    pub ambiguity: usize,
}

/// Unlabelled input rows: `(title, context, gold)`. Only `context` is
/// required; column names are case-insensitive.
pub fn read_unlabeled(path: &Path) -> Result<Vec<(String, String, Option<Label>)>, BenchError> {
    let format_err = |message: String| BenchError::Format {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| format_err(e.to_string()))?;
    let headers: HashMap<String, usize> = reader
        .headers()
        .map_err(|e| format_err(e.to_string()))?
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim().to_lowercase(), i))
        .collect();
    let context = *headers
        .get("context")
        .ok_or_else(|| format_err("missing required column \"context\"".into()))?;
    let title = headers.get("title").copied();
    let judgment = headers.get("judgment").copied();
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| format_err(e.to_string()))?;
        let gold = match judgment.and_then(|j| rec.get(j)).map(str::trim) {
            None | Some("") => None,
            Some(s) => Some(s.parse::<Label>().map_err(|e| format_err(format!("row {}: unknown judgment label {e:?}", i + 1)))?),
        };
        rows.push((
            title.and_then(|t| rec.get(t)).unwrap_or_default().to_string(),
            rec.get(context).unwrap_or_default().to_string(),
            gold,
        ));
    }
    Ok(rows)
}

/// Verdicts for every row of `csv_path`; `tau` overrides the artifact's
/// stored threshold.
pub fn predict_file(
    artifact: &ModelArtifact,
    csv_path: &Path,
    tau: Option<f64>,
) -> Result<(Vec<PredictionRow>, PredictionSummary), BenchError> {
    let tau = tau.unwrap_or(artifact.abstain_threshold);
    let vocab = artifact.vocab()?;
    let model = artifact.model()?;
    let input = read_unlabeled(csv_path)?;
    let mut rows = Vec::with_capacity(input.len());
    let mut summary = PredictionSummary::default();
    for chunk in input.chunks(16) {
        let encoded: Vec<Encoded> = chunk.iter().map(|(_, c, _)| encode(&vocab, c, None, artifact.max_len)).collect();
        let refs: Vec<&Encoded> = encoded.iter().collect();
        let logits = model.logits(&TokenBatch::new(&refs, vec![0; refs.len()]))?;
        for (r, (title, _, gold)) in chunk.iter().enumerate() {
            let p = softmax(logits.row(r));
            let pred = decide([p[0], p[1]], tau);
            match pred.verdict {
                Verdict::Petitioner => summary.petitioner += 1,
                Verdict::Respondent => summary.respondent += 1,
                Verdict::Ambiguity => summary.ambiguity += 1,
            }
            rows.push(PredictionRow {
                title: title.clone(),
                verdict: pred.verdict,
                confidence: pred.confidence,
                gold: *gold,
            });
        }
    }
    Ok((rows, summary))
}
