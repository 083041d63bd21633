//! Pretraining objective constructors: masked LM (static and dynamic),
//! next-sentence and sentence-order pairs, permutation masks, and
//! replaced-token detection.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{TokenBatch, MASK, NUM_SPECIAL};
use crate::rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("masking probability {0} outside (0, 1)")]
    BadProbability(f64),
    #[error("need at least two documents with sentences to draw cross-document negatives")]
    CorpusTooSmall,
    #[error("document {0} has fewer than two sentences")]
    ShortDocument(usize),
    #[error("{predictions} generator predictions for {positions} masked positions")]
    PredictionCount { predictions: usize, positions: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveKind {
    Mlm,
    Nsp,
    Sop,
    Plm,
    Rtd,
}

/// Masked-LM corruption of a batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlmSample {
    /// Batch ids with masked positions replaced by `[MASK]`.
    pub input_ids: Vec<Vec<usize>>,
    /// `(row, position)` of every masked token, row-major order.
    pub positions: Vec<(usize, usize)>,
    pub original_ids: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairLabel {
    IsNext,
    NotNext,
    InOrder,
    Swapped,
}

impl PairLabel {
    /// Class id for the two-way pair head: 0 for the positive reading.
    pub fn class(self) -> usize {
        match self {
            PairLabel::IsNext | PairLabel::InOrder => 0,
            PairLabel::NotNext | PairLabel::Swapped => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentencePair {
    pub a: String,
    pub b: String,
    pub label: PairLabel,
    /// Document of `a`.
    pub doc_a: usize,
    /// Document of `b`.
    pub doc_b: usize,
}

/// Factorization order over the non-pad positions of one row, and the
/// attention pattern it induces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlmMask {
    pub seq_len: usize,
    pub order: Vec<usize>,
    /// Row-major `seq_len×seq_len`; `allowed[i*seq_len + j]` iff `j`
    /// precedes `i` in `order`.
    pub allowed: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlmSample {
    /// Batch ids with target positions replaced by `[MASK]`.
    pub input_ids: Vec<Vec<usize>>,
    pub masks: Vec<PlmMask>,
    pub targets: Vec<(usize, usize)>,
    pub original_ids: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RtdLabel {
    Original,
    Replaced,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RtdSample {
    pub corrupted_ids: Vec<Vec<usize>>,
    /// One label per position; padding is labelled `Original` and ignored.
    pub labels: Vec<Vec<RtdLabel>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ObjectiveSample {
    Mlm(MlmSample),
    Nsp(Vec<PairLabel>),
    Sop(Vec<PairLabel>),
    Plm(PlmSample),
    Rtd(RtdSample),
}

impl ObjectiveSample {
    pub fn kind(&self) -> ObjectiveKind {
        match self {
            ObjectiveSample::Mlm(_) => ObjectiveKind::Mlm,
            ObjectiveSample::Nsp(_) => ObjectiveKind::Nsp,
            ObjectiveSample::Sop(_) => ObjectiveKind::Sop,
            ObjectiveSample::Plm(_) => ObjectiveKind::Plm,
            ObjectiveSample::Rtd(_) => ObjectiveKind::Rtd,
        }
    }
}

fn is_special(id: usize) -> bool {
    id < NUM_SPECIAL
}

/// Masks each eligible token (not padding, not a reserved token) with
/// probability `p`. Static masking keys the RNG on `seed` alone, so every
/// epoch sees the same mask; dynamic masking keys it on `(seed, epoch)`.
pub fn mask_mlm(
    batch: &TokenBatch,
    p: f64,
    dynamic: bool,
    epoch: u64,
    seed: u64,
) -> Result<MlmSample, ObjectiveError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(ObjectiveError::BadProbability(p));
    }
    let mut rng = if dynamic {
        rng::stream(seed, &[0x01a1, epoch])
    } else {
        rng::stream(seed, &[0x01a1])
    };
    let mut input_ids = batch.ids.clone();
    let mut positions = Vec::new();
    let mut original_ids = Vec::new();
    for (r, row) in batch.ids.iter().enumerate() {
        for (i, &id) in row.iter().enumerate() {
            if !batch.pad_mask[r][i] || is_special(id) {
                continue;
            }
            if rng.random::<f64>() < p {
                input_ids[r][i] = MASK;
                positions.push((r, i));
                original_ids.push(id);
            }
        }
    }
    Ok(MlmSample {
        input_ids,
        positions,
        original_ids,
    })
}

/// Splits on `.`, `?` or `!` followed by whitespace (or the end of text).
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    for (k, &(i, ch)) in chars.iter().enumerate() {
        if matches!(ch, '.' | '?' | '!') {
            let next_ws = chars.get(k + 1).is_none_or(|(_, c)| c.is_whitespace());
            if next_ws {
                let end = i + ch.len_utf8();
                let s = text[start..end].trim();
                if !s.is_empty() {
                    out.push(s.to_string());
                }
                start = end;
            }
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail.to_string());
    }
    out
}

fn adjacent_pairs(documents: &[Vec<String>]) -> Vec<(usize, usize)> {
    documents
        .iter()
        .enumerate()
        .flat_map(|(d, sents)| (0..sents.len().saturating_sub(1)).map(move |i| (d, i)))
        .collect()
}

/// Next-sentence pairs. Every adjacent pair is a candidate; after a seeded
/// shuffle, even slots keep the true successor (`IsNext`) and odd slots swap
/// in a sentence from a different document (`NotNext`).
pub fn make_nsp_pairs(documents: &[Vec<String>], seed: u64) -> Result<Vec<SentencePair>, ObjectiveError> {
    let populated: Vec<usize> = (0..documents.len())
        .filter(|&d| !documents[d].is_empty())
        .collect();
    if populated.len() < 2 {
        return Err(ObjectiveError::CorpusTooSmall);
    }
    let mut rng = rng::stream(seed, &[0x0a5b]);
    let mut pairs = adjacent_pairs(documents);
    pairs.shuffle(&mut rng);
    Ok(pairs
        .into_iter()
        .enumerate()
        .map(|(slot, (d, i))| {
            let a = documents[d][i].clone();
            if slot % 2 == 0 {
                SentencePair {
                    a,
                    b: documents[d][i + 1].clone(),
                    label: PairLabel::IsNext,
                    doc_a: d,
                    doc_b: d,
                }
            } else {
                let others: Vec<usize> = populated.iter().copied().filter(|&o| o != d).collect();
                let other = *others.choose(&mut rng).expect("two populated documents");
                let b = documents[other].choose(&mut rng).expect("non-empty").clone();
                SentencePair {
                    a,
                    b,
                    label: PairLabel::NotNext,
                    doc_a: d,
                    doc_b: other,
                }
            }
        })
        .collect())
}

/// Sentence-order pairs: always two adjacent sentences, kept in order in
/// even slots and swapped in odd slots after a seeded shuffle.
pub fn make_sop_pairs(documents: &[Vec<String>], seed: u64) -> Result<Vec<SentencePair>, ObjectiveError> {
    if let Some(d) = documents.iter().position(|s| s.len() < 2) {
        return Err(ObjectiveError::ShortDocument(d));
    }
    let mut rng = rng::stream(seed, &[0x0509]);
    let mut pairs = adjacent_pairs(documents);
    pairs.shuffle(&mut rng);
    Ok(pairs
        .into_iter()
        .enumerate()
        .map(|(slot, (d, i))| {
            let (first, second) = (documents[d][i].clone(), documents[d][i + 1].clone());
            let (a, b, label) = if slot % 2 == 0 {
                (first, second, PairLabel::InOrder)
            } else {
                (second, first, PairLabel::Swapped)
            };
            SentencePair {
                a,
                b,
                label,
                doc_a: d,
                doc_b: d,
            }
        })
        .collect())
}

impl PlmMask {
    /// Mask for an explicit order over a subset of `0..seq_len`; positions
    /// outside the order attend to nothing and are attended by nothing.
    pub fn from_order(seq_len: usize, order: Vec<usize>) -> Self {
        let mut rank = vec![usize::MAX; seq_len];
        for (r, &pos) in order.iter().enumerate() {
            rank[pos] = r;
        }
        let mut allowed = vec![false; seq_len * seq_len];
        for i in 0..seq_len {
            if rank[i] == usize::MAX {
                continue;
            }
            for j in 0..seq_len {
                allowed[i * seq_len + j] = rank[j] < rank[i];
            }
        }
        Self {
            seq_len,
            order,
            allowed,
        }
    }

    pub fn attends(&self, i: usize, j: usize) -> bool {
        self.allowed[i * self.seq_len + j]
    }

    /// Position of `pos` in the factorization order.
    pub fn rank(&self, pos: usize) -> Option<usize> {
        self.order.iter().position(|&p| p == pos)
    }
}

/// Samples one factorization order uniformly over the non-pad positions.
pub fn plm_mask(seq_len: usize, pad_mask: &[bool], seed: u64) -> PlmMask {
    let mut order: Vec<usize> = (0..seq_len).filter(|&i| pad_mask[i]).collect();
    order.shuffle(&mut rng::stream(seed, &[0x0b1e]));
    PlmMask::from_order(seq_len, order)
}

/// Permutation-LM instance: one order per row; the last `⌈0.15·n⌉`
/// non-reserved positions of each order are prediction targets and are
/// replaced by `[MASK]` in the input.
pub fn make_plm_sample(batch: &TokenBatch, seed: u64, epoch: u64) -> PlmSample {
    let mut input_ids = batch.ids.clone();
    let mut masks = Vec::with_capacity(batch.len());
    let mut targets = Vec::new();
    let mut original_ids = Vec::new();
    for r in 0..batch.len() {
        let mask = plm_mask(batch.seq_len(), &batch.pad_mask[r], rng::mix(seed, &[epoch, r as u64]));
        let eligible: Vec<usize> = mask
            .order
            .iter()
            .copied()
            .filter(|&p| !is_special(batch.ids[r][p]))
            .collect();
        let k = (eligible.len() * 15).div_ceil(100);
        let mut row_targets: Vec<usize> = eligible[eligible.len() - k..].to_vec();
        row_targets.sort_unstable();
        for p in row_targets {
            targets.push((r, p));
            original_ids.push(batch.ids[r][p]);
            input_ids[r][p] = MASK;
        }
        masks.push(mask);
    }
    PlmSample {
        input_ids,
        masks,
        targets,
        original_ids,
    }
}

/// Replaces masked positions with generator predictions. A position is
/// `Replaced` iff its corrupted id differs from the original, so a correct
/// guess counts as `Original`.
pub fn rtd_corrupt(
    batch: &TokenBatch,
    positions: &[(usize, usize)],
    predictions: &[usize],
) -> Result<RtdSample, ObjectiveError> {
    if positions.len() != predictions.len() {
        return Err(ObjectiveError::PredictionCount {
            predictions: predictions.len(),
            positions: positions.len(),
        });
    }
    let mut corrupted_ids = batch.ids.clone();
    for (&(r, p), &pred) in positions.iter().zip(predictions) {
        corrupted_ids[r][p] = pred;
    }
    let labels = corrupted_ids
        .iter()
        .zip(&batch.ids)
        .map(|(c, o)| {
            c.iter()
                .zip(o)
                .map(|(a, b)| {
                    if a == b {
                        RtdLabel::Original
                    } else {
                        RtdLabel::Replaced
                    }
                })
                .collect()
        })
        .collect();
    Ok(RtdSample {
        corrupted_ids,
        labels,
    })
}
