use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{AdamConfig, AdamState, TrainError};
use crate::activations::ActivationKind;
use crate::data::{encode, Encoded, JudgmentRecord, TokenBatch, Vocab};
use crate::model::{EncoderModel, ModelError};
use crate::rng;
use crate::tensor::Tensor;

/// Number of equal-width confidence bins over `[0.5, 1]`.
pub const CONFIDENCE_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub attention_dropout: f64,
    /// Minimum class probability for a non-abstaining verdict.
    pub abstain_threshold: f64,
    /// Encoded sequence length (truncation and padding).
    pub max_len: usize,
    pub adam: AdamConfig,
}

impl TrainConfig {
    /// Defaults for one activation: 100 epochs, batch 8, lr 3e-4, τ 0.6,
    /// and the activation's attention-dropout rate.
    pub fn new(activation: ActivationKind, seed: u64) -> Self {
        Self {
            epochs: 100,
            batch_size: 8,
            seed,
            attention_dropout: Self::dropout_for(activation),
            abstain_threshold: 0.6,
            max_len: 128,
            adam: AdamConfig::default(),
        }
    }

    /// 0.1 for SiLU, 0.3 for every other activation.
    pub fn dropout_for(activation: ActivationKind) -> f64 {
        match activation {
            ActivationKind::Silu => 0.1,
            _ => 0.3,
        }
    }

    pub fn with_attention_dropout(mut self, p: f64) -> Self {
        self.attention_dropout = p;
        self
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |field, message: &str| {
            Err(TrainError::Config {
                field,
                message: message.to_string(),
            })
        };
        if self.epochs == 0 {
            return bad("epochs", "must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive");
        }
        if !(0.0..1.0).contains(&self.attention_dropout) {
            return bad("attention_dropout", "must lie in [0, 1)");
        }
        if !(self.abstain_threshold > 0.5 && self.abstain_threshold < 1.0) {
            return bad("abstain_threshold", "must lie in (0.5, 1)");
        }
        if self.max_len < 3 {
            return bad("max_len", "must be at least 3");
        }
        let a = &self.adam;
        if !(a.learning_rate > 0.0 && a.learning_rate.is_finite()) {
            return bad("learning_rate", "must be positive");
        }
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) {
            return bad("beta1", "betas must lie in [0, 1)");
        }
        if a.eps.is_nan() || a.eps <= 0.0 {
            return bad("eps", "must be positive");
        }
        Ok(())
    }
}

/// Encoded examples with their class ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSet {
    pub rows: Vec<Encoded>,
    pub labels: Vec<usize>,
}

impl EncodedSet {
    pub fn from_records(records: &[JudgmentRecord], vocab: &Vocab, max_len: usize) -> Self {
        Self {
            rows: records.iter().map(|r| encode(vocab, &r.context, None, max_len)).collect(),
            labels: records.iter().map(|r| r.judgment.index()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn batch(&self, indices: &[usize]) -> TokenBatch {
        let rows: Vec<&Encoded> = indices.iter().map(|&i| &self.rows[i]).collect();
        TokenBatch::new(&rows, indices.iter().map(|&i| self.labels[i]).collect())
    }

    /// Consecutive batches in stored order.
    pub fn batches(&self, batch_size: usize) -> impl Iterator<Item = TokenBatch> + '_ {
        let idx: Vec<usize> = (0..self.len()).collect();
        let chunks: Vec<Vec<usize>> = idx.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect();
        chunks.into_iter().map(move |c| self.batch(&c))
    }
}

/// Anything that maps a batch to class logits.
pub trait Classifier {
    fn class_logits(&self, batch: &TokenBatch) -> Result<Tensor, ModelError>;
}

impl Classifier for EncoderModel {
    fn class_logits(&self, batch: &TokenBatch) -> Result<Tensor, ModelError> {
        self.logits(batch)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Mean cross-entropy.
    pub loss: f64,
    /// Fraction of argmax predictions equal to the gold class.
    pub accuracy: f64,
    pub probabilities: Vec<Vec<f64>>,
}

/// Evaluation-mode loss and accuracy. Ties in the argmax go to the lower
/// class id.
pub fn evaluate<C: Classifier + ?Sized>(model: &C, set: &EncodedSet, batch_size: usize) -> Result<Evaluation, TrainError> {
    if set.is_empty() {
        return Err(TrainError::EmptySet("evaluation"));
    }
    let mut loss = 0.0;
    let mut correct = 0;
    let mut probabilities = Vec::with_capacity(set.len());
    for batch in set.batches(batch_size) {
        let logits = model.class_logits(&batch)?;
        for (r, &label) in batch.labels.iter().enumerate() {
            let row: Vec<f64> = logits.row(r).iter().map(|&x| x as f64).collect();
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let log_z = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            loss += log_z - row[label];
            let pred = (0..row.len()).fold(0, |best, j| if row[j] > row[best] { j } else { best });
            correct += usize::from(pred == label);
            probabilities.push(row.iter().map(|x| (x - log_z).exp()).collect());
        }
    }
    let n = set.len() as f64;
    Ok(Evaluation {
        loss: loss / n,
        accuracy: correct as f64 / n,
        probabilities,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Epoch with the lowest validation loss (first on ties).
    pub best_epoch: usize,
    /// Final validation confidences, binned over `[0.5, 1]`.
    pub confidence_histogram: Vec<usize>,
    /// Final validation records below the abstention threshold.
    pub abstentions: usize,
    pub abstain_threshold: f64,
}

impl TrainReport {
    pub fn last(&self) -> &EpochRecord {
        self.epochs.last().expect("at least one epoch")
    }
}

/// Fine-tuning state, advanced one epoch at a time.
pub struct Trainer {
    model: EncoderModel,
    adam: AdamState,
    config: TrainConfig,
    train: EncodedSet,
    val: EncodedSet,
    records: Vec<EpochRecord>,
    timing: bool,
}

impl Trainer {
    /// Prepares training; the model's attention dropout is set from `config`.
    pub fn new(mut model: EncoderModel, train: EncodedSet, val: EncodedSet, config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        if train.is_empty() {
            return Err(TrainError::EmptySet("training"));
        }
        if val.is_empty() {
            return Err(TrainError::EmptySet("validation"));
        }
        model.set_attention_dropout(config.attention_dropout)?;
        let adam = AdamState::new(model.store(), config.adam);
        Ok(Self {
            model,
            adam,
            config,
            train,
            val,
            records: Vec::new(),
            timing: true,
        })
    }

    /// With `false`, per-epoch wall-clock times are recorded as 0 so that
    /// reports are reproducible byte for byte.
    pub fn timed(mut self, timing: bool) -> Self {
        self.timing = timing;
        self
    }

    pub fn model(&self) -> &EncoderModel {
        &self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn records(&self) -> &[EpochRecord] {
        &self.records
    }

    /// One pass over the shuffled training set followed by validation.
    pub fn epoch(&mut self) -> Result<&EpochRecord, TrainError> {
        let start = Instant::now();
        let e = self.records.len();
        let seed = self.config.seed;
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut rng::stream(seed, &[0x5f1e, e as u64]));
        let mut total = 0.0;
        for (b, chunk) in order.chunks(self.config.batch_size).enumerate() {
            let batch = self.train.batch(chunk);
            let mut dropout_rng = rng::stream(seed, &[0xd209, e as u64, b as u64]);
            let wrap = |source| TrainError::Batch {
                epoch: e + 1,
                batch: b,
                source,
            };
            let (loss, grads) = {
                let mut pass = self.model.pass();
                let loss = pass
                    .classification_loss(&batch, true, &mut dropout_rng)
                    .map_err(wrap)?;
                pass.backward(loss).map_err(wrap)?;
                (pass.tape.value(loss).data()[0] as f64, pass.gradients())
            };
            self.adam.step(self.model.store_mut(), &grads)?;
            total += loss * chunk.len() as f64;
        }
        let eval = evaluate(&self.model, &self.val, self.config.batch_size)?;
        self.records.push(EpochRecord {
            epoch: e + 1,
            train_loss: total / self.train.len() as f64,
            val_loss: eval.loss,
            val_accuracy: eval.accuracy,
            seconds: if self.timing { start.elapsed().as_secs_f64() } else { 0.0 },
        });
        Ok(self.records.last().expect("just pushed"))
    }

    /// Evaluation-mode accuracy on the training set.
    pub fn train_accuracy(&self) -> Result<f64, TrainError> {
        Ok(evaluate(&self.model, &self.train, self.config.batch_size)?.accuracy)
    }

    /// Runs the remaining configured epochs and assembles the report.
    pub fn run(mut self) -> Result<(EncoderModel, TrainReport), TrainError> {
        while self.records.len() < self.config.epochs {
            self.epoch()?;
        }
        self.finish()
    }

    pub fn finish(self) -> Result<(EncoderModel, TrainReport), TrainError> {
        if self.records.is_empty() {
            return Err(TrainError::Config {
                field: "epochs",
                message: "no epoch has run".into(),
            });
        }
        let tau = self.config.abstain_threshold;
        let eval = evaluate(&self.model, &self.val, self.config.batch_size)?;
        let mut histogram = vec![0; CONFIDENCE_BINS];
        let mut abstentions = 0;
        for p in &eval.probabilities {
            let confidence = p.iter().copied().fold(0.0, f64::max);
            let bin = ((confidence - 0.5) * 2.0 * CONFIDENCE_BINS as f64).floor() as usize;
            histogram[bin.min(CONFIDENCE_BINS - 1)] += 1;
            abstentions += usize::from(confidence < tau);
        }
        let best_epoch = self
            .records
            .iter()
            .fold(&self.records[0], |best, r| if r.val_loss < best.val_loss { r } else { best })
            .epoch;
        Ok((
            self.model,
            TrainReport {
                epochs: self.records,
                best_epoch,
                confidence_histogram: histogram,
                abstentions,
                abstain_threshold: tau,
            },
        ))
    }
}

/// Fine-tunes `model` for `config.epochs` epochs.
pub fn train(
    model: EncoderModel,
    train_set: EncodedSet,
    val_set: EncodedSet,
    config: TrainConfig,
) -> Result<(EncoderModel, TrainReport), TrainError> {
    Trainer::new(model, train_set, val_set, config)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_vocab, synth_corpus};
    use crate::model::{build_model, EncoderConfig, Variant};

    struct Fixed(Vec<Vec<f64>>);

    impl Classifier for Fixed {
        fn class_logits(&self, batch: &TokenBatch) -> Result<Tensor, ModelError> {
            let rows: Vec<Vec<crate::tensor::Float>> = (0..batch.len())
                .map(|i| self.0[i % self.0.len()].iter().map(|&x| x as _).collect())
                .collect();
            Ok(Tensor::from_rows(&rows)?)
        }
    }

    fn set(labels: Vec<usize>) -> EncodedSet {
        let rows = labels.iter().map(|_| crate::data::encode_ids(vec![7], None, 4)).collect();
        EncodedSet { rows, labels }
    }

    #[test]
    fn dropout_rule() {
        for k in ActivationKind::ALL {
            let c = TrainConfig::new(k, 0);
            let want = if k == ActivationKind::Silu { 0.1 } else { 0.3 };
            assert_eq!(c.attention_dropout, want);
        }
        let c = TrainConfig::new(ActivationKind::Relu, 0).with_attention_dropout(0.2);
        assert_eq!(c.attention_dropout, 0.2);
    }

    #[test]
    fn invalid_config_named() {
        let mut c = TrainConfig::new(ActivationKind::Gelu, 0);
        c.abstain_threshold = 0.5;
        assert!(matches!(c.validate(), Err(TrainError::Config { field: "abstain_threshold", .. })));
    }

    #[test]
    fn uniform_logits_give_ln2() {
        let eval = evaluate(&Fixed(vec![vec![0.3, 0.3]]), &set(vec![0, 1, 0, 1]), 3).unwrap();
        assert!((eval.loss - 2f64.ln()).abs() < 1e-12);
        assert_eq!(eval.accuracy, 0.5);
    }

    #[test]
    fn trainer_counts_epochs_and_is_deterministic() {
        let recs = synth_corpus(20, 1);
        let vocab = build_vocab(&recs, 500).unwrap();
        let mut cfg = EncoderConfig::desk(Variant::Bert, vocab.len());
        cfg.hidden = 16;
        cfg.ffn_dim = 32;
        cfg.embed_dim = 16;
        let mut tc = TrainConfig::new(ActivationKind::Gelu, 3);
        tc.epochs = 3;
        tc.max_len = 48;
        let run = || {
            let tr = EncodedSet::from_records(&recs[..16], &vocab, 48);
            let va = EncodedSet::from_records(&recs[16..], &vocab, 48);
            train(build_model(&cfg, 1).unwrap(), tr, va, tc.clone()).unwrap()
        };
        let (m1, r1) = run();
        let (m2, r2) = run();
        assert_eq!(r1.epochs.len(), 3);
        let losses = |r: &TrainReport| r.epochs.iter().map(|e| (e.train_loss, e.val_loss)).collect::<Vec<_>>();
        assert_eq!(losses(&r1), losses(&r2));
        assert_eq!(m1.store().flat(), m2.store().flat());
        assert_eq!(r1.confidence_histogram.iter().sum::<usize>(), 4);
        assert!((1..=3).contains(&r1.best_epoch));
    }
}
