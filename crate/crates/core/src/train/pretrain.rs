use std::fmt;

use serde::{Deserialize, Serialize};

use super::{AdamState, EncodedSet, TrainConfig, TrainError};
use crate::data::{encode, Encoded, JudgmentRecord, TokenBatch, Vocab};
use crate::model::{EncoderModel, ModelError, Variant};
use crate::objectives::{make_nsp_pairs, make_plm_sample, make_sop_pairs, mask_mlm, split_sentences, ObjectiveSample};
use crate::rng;

const MASK_RATE: f64 = 0.15;

/// Pretraining objective mix run before fine-tuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PretrainObjective {
    /// Static masked LM plus next-sentence prediction.
    MlmNsp,
    /// Static masked LM plus sentence-order prediction.
    MlmSop,
    /// Masked LM with a fresh mask every epoch, no pair task.
    DynamicMlm,
    /// Permutation LM.
    Plm,
    /// Generator MLM plus discriminator replaced-token detection.
    Rtd,
    /// Static masked LM only.
    Mlm,
}

impl PretrainObjective {
    pub const ALL: [PretrainObjective; 6] = [
        PretrainObjective::MlmNsp,
        PretrainObjective::MlmSop,
        PretrainObjective::DynamicMlm,
        PretrainObjective::Plm,
        PretrainObjective::Rtd,
        PretrainObjective::Mlm,
    ];

    /// The variant's own recipe.
    pub fn recipe(variant: Variant) -> Self {
        match variant {
            Variant::Bert => PretrainObjective::MlmNsp,
            Variant::Albert => PretrainObjective::MlmSop,
            Variant::Roberta => PretrainObjective::DynamicMlm,
            Variant::Xlnet => PretrainObjective::Plm,
            Variant::Electra => PretrainObjective::Rtd,
            Variant::Fnet => PretrainObjective::Mlm,
        }
    }

    /// Whether `variant` carries the heads this objective needs.
    pub fn supports(self, variant: Variant) -> bool {
        match self {
            PretrainObjective::MlmNsp | PretrainObjective::MlmSop => variant.has_pair_head(),
            PretrainObjective::Rtd => variant == Variant::Electra,
            _ => variant.has_mlm_head(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PretrainObjective::MlmNsp => "mlm_nsp",
            PretrainObjective::MlmSop => "mlm_sop",
            PretrainObjective::DynamicMlm => "dynamic_mlm",
            PretrainObjective::Plm => "plm",
            PretrainObjective::Rtd => "rtd",
            PretrainObjective::Mlm => "mlm",
        }
    }
}

impl fmt::Display for PretrainObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn pair_batches(
    records: &[JudgmentRecord],
    vocab: &Vocab,
    objective: PretrainObjective,
    config: &TrainConfig,
    seed: u64,
) -> Result<Vec<TokenBatch>, TrainError> {
    let docs: Vec<Vec<String>> = records
        .iter()
        .map(|r| split_sentences(&r.context))
        .filter(|d| d.len() >= 2)
        .collect();
    let pairs = if objective == PretrainObjective::MlmNsp {
        make_nsp_pairs(&docs, seed)?
    } else {
        make_sop_pairs(&docs, seed)?
    };
    let encoded: Vec<Encoded> = pairs
        .iter()
        .map(|p| encode(vocab, &p.a, Some(&p.b), config.max_len))
        .collect();
    Ok(encoded
        .chunks(config.batch_size)
        .zip(pairs.chunks(config.batch_size))
        .map(|(rows, ps)| {
            let refs: Vec<&Encoded> = rows.iter().collect();
            TokenBatch::new(&refs, ps.iter().map(|p| p.label.class()).collect())
        })
        .collect())
}

/// Runs `epochs` epochs of `objective` over `records` in a fixed batch
/// order and returns the mean loss of each epoch. Batches whose sample has
/// no target contribute nothing.
pub fn pretrain(
    model: &mut EncoderModel,
    records: &[JudgmentRecord],
    vocab: &Vocab,
    objective: PretrainObjective,
    epochs: usize,
    config: &TrainConfig,
) -> Result<Vec<f64>, TrainError> {
    config.validate()?;
    let variant = model.config().variant;
    if !objective.supports(variant) {
        return Err(TrainError::Config {
            field: "objective",
            message: format!("{variant} cannot pretrain with {objective}"),
        });
    }
    model.set_attention_dropout(config.attention_dropout)?;
    let seed = rng::mix(config.seed, &[0x9e7a]);
    let batches: Vec<TokenBatch> = match objective {
        PretrainObjective::MlmNsp | PretrainObjective::MlmSop => {
            pair_batches(records, vocab, objective, config, seed)?
        }
        _ => EncodedSet::from_records(records, vocab, config.max_len)
            .batches(config.batch_size)
            .collect(),
    };
    let mut adam = AdamState::new(model.store(), config.adam);
    let mut history = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let e = epoch as u64;
        let mut total = 0.0;
        let mut counted = 0;
        for (b, batch) in batches.iter().enumerate() {
            let batch_seed = rng::mix(seed, &[b as u64]);
            let mut dropout_rng = rng::stream(seed, &[0xd209, e, b as u64]);
            let wrap = |source: ModelError| TrainError::Batch {
                epoch: epoch + 1,
                batch: b,
                source,
            };
            let step = {
                let mut pass = model.pass();
                let loss = match objective {
                    PretrainObjective::MlmNsp | PretrainObjective::MlmSop => {
                        let sample = mask_mlm(batch, MASK_RATE, false, e, batch_seed)?;
                        let (h, mlm) = pass.mlm_loss(batch, &sample, true, &mut dropout_rng).map_err(wrap)?;
                        let logits = pass.pair_logits(&h).map_err(wrap)?;
                        let pair = pass.tape.cross_entropy(logits, &batch.labels).map_err(|e| wrap(e.into()))?;
                        Some(match mlm {
                            Some(m) => pass.tape.add(m, pair).map_err(|e| wrap(e.into()))?,
                            None => pair,
                        })
                    }
                    PretrainObjective::Mlm | PretrainObjective::DynamicMlm => {
                        let dynamic = objective == PretrainObjective::DynamicMlm;
                        let sample = mask_mlm(batch, MASK_RATE, dynamic, e, batch_seed)?;
                        pass.mlm_loss(batch, &sample, true, &mut dropout_rng).map_err(wrap)?.1
                    }
                    PretrainObjective::Plm => {
                        let sample = make_plm_sample(batch, batch_seed, e);
                        pass.plm_loss(batch, &sample, true, &mut dropout_rng).map_err(wrap)?
                    }
                    PretrainObjective::Rtd => {
                        let sample = ObjectiveSample::Mlm(mask_mlm(batch, MASK_RATE, true, e, batch_seed)?);
                        Some(pass.electra_step(batch, &sample, true, &mut dropout_rng).map_err(wrap)?.total)
                    }
                };
                match loss {
                    Some(l) => {
                        pass.backward(l).map_err(wrap)?;
                        Some((pass.tape.value(l).data()[0] as f64, pass.gradients()))
                    }
                    None => None,
                }
            };
            if let Some((loss, grads)) = step {
                adam.step(model.store_mut(), &grads)?;
                total += loss;
                counted += 1;
            }
        }
        history.push(if counted == 0 { 0.0 } else { total / counted as f64 });
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::ActivationKind;
    use crate::data::{build_vocab, synth_corpus};
    use crate::model::{build_model, EncoderConfig};

    #[test]
    fn every_recipe_runs_and_changes_weights() {
        let recs = synth_corpus(12, 2);
        let vocab = build_vocab(&recs, 500).unwrap();
        let mut tc = TrainConfig::new(ActivationKind::Relu, 1);
        tc.max_len = 40;
        tc.batch_size = 6;
        for v in Variant::ALL {
            let mut cfg = EncoderConfig::desk(v, vocab.len());
            cfg.hidden = 16;
            cfg.ffn_dim = 32;
            cfg.embed_dim = cfg.embed_dim.min(16);
            if v == Variant::Albert {
                cfg.embed_dim = 8;
            }
            let mut model = build_model(&cfg, 3).unwrap();
            let before = model.store().flat();
            let objective = PretrainObjective::recipe(v);
            let losses = pretrain(&mut model, &recs, &vocab, objective, 2, &tc).unwrap();
            assert_eq!(losses.len(), 2);
            assert!(losses.iter().all(|l| l.is_finite() && *l > 0.0), "{v}: {losses:?}");
            assert_ne!(before, model.store().flat(), "{v}");
        }
    }

    #[test]
    fn unsupported_objective_rejected() {
        let recs = synth_corpus(6, 2);
        let vocab = build_vocab(&recs, 500).unwrap();
        let mut model = build_model(&EncoderConfig::desk(Variant::Roberta, vocab.len()), 0).unwrap();
        let tc = TrainConfig::new(ActivationKind::Relu, 1);
        let err = pretrain(&mut model, &recs, &vocab, PretrainObjective::MlmNsp, 1, &tc).unwrap_err();
        assert!(matches!(err, TrainError::Config { field: "objective", .. }));
    }
}
