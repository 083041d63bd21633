use std::fmt;

use serde::{Deserialize, Serialize};

use super::Classifier;
use crate::data::{encode, JudgmentRecord, Label, TokenBatch, Vocab};
use crate::model::ModelError;
use crate::tensor::Float;

/// Outcome of one judgment: a gold class, or an abstention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Petitioner,
    Respondent,
    Ambiguity,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Petitioner => "petitioner",
            Verdict::Respondent => "respondent",
            Verdict::Ambiguity => "ambiguity",
        }
    }
}

impl From<Label> for Verdict {
    fn from(l: Label) -> Self {
        match l {
            Label::Petitioner => Verdict::Petitioner,
            Label::Respondent => Verdict::Respondent,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub verdict: Verdict,
    /// Largest class probability, in `[0.5, 1]`.
    pub confidence: f64,
    pub probabilities: [f64; 2],
}

/// Numerically stable softmax.
pub fn softmax(logits: &[Float]) -> Vec<f64> {
    let max = logits.iter().copied().fold(Float::NEG_INFINITY, Float::max) as f64;
    let exps: Vec<f64> = logits.iter().map(|&x| (x as f64 - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Picks the more probable class when its probability reaches `tau`,
/// otherwise abstains.
pub fn decide(probabilities: [f64; 2], tau: f64) -> Prediction {
    let (best, confidence) = if probabilities[1] > probabilities[0] {
        (Label::Respondent, probabilities[1])
    } else {
        (Label::Petitioner, probabilities[0])
    };
    let verdict = if confidence >= tau && probabilities[0] != probabilities[1] {
        best.into()
    } else {
        Verdict::Ambiguity
    };
    Prediction {
        verdict,
        confidence,
        probabilities,
    }
}

pub fn predict_verdict<C: Classifier + ?Sized>(
    model: &C,
    record: &JudgmentRecord,
    vocab: &Vocab,
    tau: f64,
    max_len: usize,
) -> Result<Prediction, ModelError> {
    let e = encode(vocab, &record.context, None, max_len);
    let logits = model.class_logits(&TokenBatch::new(&[&e], vec![record.judgment.index()]))?;
    let p = softmax(logits.row(0));
    Ok(decide([p[0], p[1]], tau))
}
