//! Central finite-difference checks for tape ops, activation derivatives
//! and every variant × activation encoder.

use rand::seq::index::sample;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::activations::{self, ActivationKind};
use crate::data::{encode_ids, Encoded, TokenBatch};
use crate::model::{build_model, EncoderConfig, EncoderModel, ModelError, ParamId, Variant};
use crate::objectives::{make_plm_sample, mask_mlm, ObjectiveSample, PairLabel};
use crate::rng::{self, StreamRng};
use crate::tensor::{Float, Tape, Tensor, TensorError, Var};

/// Derivative under test for the activation items.
pub type DerivativeFn = fn(ActivationKind, Float) -> Float;

#[derive(Debug, Clone)]
pub struct GradcheckOptions {
    pub tolerance: f64,
    pub step: f64,
    /// Random trials per tensor op.
    pub op_trials: usize,
    /// Points per activation, evenly spaced over `[-5, 5]`.
    pub activation_points: usize,
    /// Parameter coordinates sampled per encoder.
    pub encoder_coordinates: usize,
    pub include_objectives: bool,
    pub seed: u64,
    pub derivative: DerivativeFn,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-4,
            step: 1e-5,
            op_trials: 20,
            activation_points: 1000,
            encoder_coordinates: 2000,
            include_objectives: true,
            seed: 17,
            derivative: activations::derivative,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckItem {
    pub group: &'static str,
    pub name: String,
    /// Largest norm-wise relative error over the item's trials.
    pub max_rel_error: f64,
    pub coordinates: usize,
    pub passed: bool,
    /// Set when the item could not be evaluated at all.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub items: Vec<CheckItem>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| i.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckItem> {
        self.items.iter().filter(|i| !i.passed)
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for i in &self.items {
            let status = if i.passed { "ok  " } else { "FAIL" };
            match &i.error {
                Some(e) => out.push_str(&format!("{status} {:<10} {:<28} error: {e}\n", i.group, i.name)),
                None => out.push_str(&format!(
                    "{status} {:<10} {:<28} max rel err {:.3e} over {} coords\n",
                    i.group, i.name, i.max_rel_error, i.coordinates
                )),
            }
        }
        let failed = self.failures().count();
        out.push_str(&format!(
            "{} items, {} failed, tolerance {:e}\n",
            self.items.len(),
            failed,
            self.tolerance
        ));
        out
    }
}

/// `‖a − n‖ / max(‖a‖ + ‖n‖, 1e-8)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    diff / (na + nn).max(1e-8)
}

pub fn run_gradcheck(opts: &GradcheckOptions) -> GradcheckReport {
    let mut items = op_checks(opts);
    items.extend(activation_checks(opts));
    items.extend(encoder_checks(opts));
    if opts.include_objectives {
        items.extend(objective_checks(opts));
    }
    GradcheckReport {
        tolerance: opts.tolerance,
        items,
    }
}

fn item(group: &'static str, name: impl Into<String>, result: Result<(f64, usize), String>, tol: f64) -> CheckItem {
    match result {
        Ok((err, coords)) => CheckItem {
            group,
            name: name.into(),
            max_rel_error: err,
            coordinates: coords,
            passed: err.is_finite() && err < tol,
            error: None,
        },
        Err(e) => CheckItem {
            group,
            name: name.into(),
            max_rel_error: f64::NAN,
            coordinates: 0,
            passed: false,
            error: Some(e),
        },
    }
}

// ---------------------------------------------------------------- ops

type Gradients = Vec<(ParamId, Vec<Float>)>;
type OpFn = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var, TensorError>>;
type InputFn = Box<dyn Fn(&mut StreamRng) -> Vec<Tensor>>;

struct OpCase {
    name: &'static str,
    inputs: InputFn,
    op: OpFn,
}

fn randn(shape: &[usize], rng: &mut StreamRng) -> Tensor {
    Tensor::randn(shape, 1.0, rng)
}

fn case(
    name: &'static str,
    inputs: impl Fn(&mut StreamRng) -> Vec<Tensor> + 'static,
    op: impl Fn(&mut Tape, &[Var]) -> Result<Var, TensorError> + 'static,
) -> OpCase {
    OpCase {
        name,
        inputs: Box::new(inputs),
        op: Box::new(op),
    }
}

fn op_cases() -> Vec<OpCase> {
    vec![
        case("matmul", |r| vec![randn(&[3, 4], r), randn(&[4, 5], r)], |t, v| t.matmul(v[0], v[1])),
        case("matmul_bt", |r| vec![randn(&[3, 4], r), randn(&[5, 4], r)], |t, v| t.matmul_bt(v[0], v[1])),
        case("add", |r| vec![randn(&[3, 4], r), randn(&[3, 4], r)], |t, v| t.add(v[0], v[1])),
        case("add_row_broadcast", |r| vec![randn(&[3, 4], r), randn(&[4], r)], |t, v| t.add(v[0], v[1])),
        case("mul", |r| vec![randn(&[3, 4], r), randn(&[3, 4], r)], |t, v| t.mul(v[0], v[1])),
        case("scale", |r| vec![randn(&[3, 4], r)], |t, v| t.scale(v[0], -1.7)),
        case("transpose", |r| vec![randn(&[3, 4], r)], |t, v| t.transpose(v[0])),
        case("reshape", |r| vec![randn(&[3, 4], r)], |t, v| t.reshape(v[0], &[2, 6])),
        case("concat_rows", |r| vec![randn(&[2, 3], r), randn(&[4, 3], r)], |t, v| t.concat(v, 0)),
        case("concat_cols", |r| vec![randn(&[3, 2], r), randn(&[3, 4], r)], |t, v| t.concat(v, 1)),
        case("slice", |r| vec![randn(&[5, 6], r)], |t, v| t.slice(v[0], 1..4, 2..5)),
        case("embedding_lookup", |r| vec![randn(&[6, 3], r)], |t, v| {
            t.embedding_lookup(v[0], &[4, 0, 4, 2, 5])
        }),
        case("softmax_rows", |r| vec![randn(&[3, 5], r)], |t, v| t.softmax_rows(v[0])),
        case("masked_softmax_rows", |r| vec![randn(&[3, 4], r)], |t, v| {
            let mask = [
                true, false, true, true, //
                false, false, false, false, //
                true, true, true, false,
            ];
            t.masked_softmax_rows(v[0], Some(&mask))
        }),
        case(
            "layer_norm",
            |r| vec![randn(&[3, 6], r), randn(&[6], r), randn(&[6], r)],
            |t, v| t.layer_norm(v[0], v[1], v[2], 1e-5),
        ),
        case("activate", |r| vec![randn(&[4, 5], r)], |t, v| t.activate(v[0], ActivationKind::GeluNew)),
        case("erf", |r| vec![randn(&[4, 5], r)], |t, v| t.erf(v[0])),
        case("tanh", |r| vec![randn(&[4, 5], r)], |t, v| t.tanh(v[0])),
        case("dft2_real", |r| vec![randn(&[6, 5], r)], |t, v| t.dft2_real(v[0])),
        case("dropout", |r| vec![randn(&[3, 4], r)], |t, v| {
            let scale = (0..12).map(|i| if i % 3 == 0 { 0.0 } else { 1.5 }).collect();
            t.dropout_with_mask(v[0], scale)
        }),
        case("cross_entropy", |r| vec![randn(&[4, 3], r)], |t, v| t.cross_entropy(v[0], &[0, 2, 1, 2])),
        case("sum", |r| vec![randn(&[3, 4], r)], |t, v| t.sum(v[0])),
        case("mean", |r| vec![randn(&[3, 4], r)], |t, v| t.mean(v[0])),
    ]
}

/// Scalar probe `Σ w ⊙ op(inputs)` with fixed random weights.
fn probe(case: &OpCase, inputs: &[Tensor], weights: &Tensor, track: bool) -> Result<(f64, Tape, Vec<Var>), TensorError> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|x| if track { tape.param(x) } else { tape.constant(x.clone()) })
        .collect();
    let out = (case.op)(&mut tape, &vars)?;
    let w = tape.constant(weights.clone());
    let prod = tape.mul(out, w)?;
    let loss = tape.sum(prod)?;
    let value = tape.value(loss).data()[0] as f64;
    if track {
        tape.backward(loss)?;
    }
    Ok((value, tape, vars))
}

fn check_case(case: &OpCase, opts: &GradcheckOptions, rng: &mut StreamRng) -> Result<(f64, usize), String> {
    let mut worst: f64 = 0.0;
    let mut coords = 0;
    for _ in 0..opts.op_trials {
        let inputs = (case.inputs)(rng);
        let shape = {
            let mut tape = Tape::new();
            let vars: Vec<Var> = inputs.iter().map(|x| tape.constant(x.clone())).collect();
            let out = (case.op)(&mut tape, &vars).map_err(|e| e.to_string())?;
            tape.value(out).shape().to_vec()
        };
        let weights = randn(&shape, rng);
        let (_, tape, vars) = probe(case, &inputs, &weights, true).map_err(|e| e.to_string())?;
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        for (k, x) in inputs.iter().enumerate() {
            let g = tape.grad(vars[k]);
            for i in 0..x.len() {
                analytic.push(g.map_or(0.0, |g| g[i] as f64));
                let f = |delta: f64| -> Result<f64, String> {
                    let mut shifted = inputs.clone();
                    shifted[k].data_mut()[i] += delta as Float;
                    Ok(probe(case, &shifted, &weights, false).map_err(|e| e.to_string())?.0)
                };
                numeric.push((f(opts.step)? - f(-opts.step)?) / (2.0 * opts.step));
            }
        }
        coords += analytic.len();
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    Ok((worst, coords))
}

pub fn op_checks(opts: &GradcheckOptions) -> Vec<CheckItem> {
    op_cases()
        .iter()
        .map(|c| {
            let mut rng = rng::stream(opts.seed, &[0x0e, rng::mix_labels(0, &[c.name])]);
            item("op", c.name, check_case(c, opts, &mut rng), opts.tolerance)
        })
        .collect()
}

// ---------------------------------------------------------------- activations

pub fn activation_checks(opts: &GradcheckOptions) -> Vec<CheckItem> {
    let n = opts.activation_points.max(1);
    let xs: Vec<f64> = (0..n).map(|i| -5.0 + 10.0 * (i as f64 + 0.5) / n as f64).collect();
    ActivationKind::ALL
        .iter()
        .map(|&kind| {
            let analytic: Vec<f64> = xs.iter().map(|&x| (opts.derivative)(kind, x as Float) as f64).collect();
            let numeric: Vec<f64> = xs
                .iter()
                .map(|&x| {
                    let f = |z: f64| activations::value(kind, z as Float) as f64;
                    (f(x + opts.step) - f(x - opts.step)) / (2.0 * opts.step)
                })
                .collect();
            item(
                "activation",
                kind.name(),
                Ok((relative_error(&analytic, &numeric), n)),
                opts.tolerance,
            )
        })
        .collect()
}

// ---------------------------------------------------------------- encoders

const TINY_VOCAB: usize = 24;

/// Hidden 16, two layers, two heads; ALBERT embeds at width 4.
pub fn tiny_config(variant: Variant, activation: ActivationKind) -> EncoderConfig {
    let mut c = EncoderConfig::desk(variant, TINY_VOCAB);
    c.hidden = 16;
    c.num_layers = 2;
    c.num_heads = 2;
    c.ffn_dim = 32;
    c.embed_dim = if variant == Variant::Albert { 4 } else { 16 };
    c.max_positions = 16;
    c.attention_dropout = 0.0;
    c.activation = activation;
    c
}

fn tiny_batch() -> TokenBatch {
    let rows: Vec<Encoded> = vec![
        encode_ids(vec![5, 9, 12, 7, 20, 6], None, 10),
        encode_ids(vec![11, 5, 23, 8], None, 10),
        encode_ids(vec![14, 17], Some(vec![9, 21, 6]), 10),
    ];
    let refs: Vec<&Encoded> = rows.iter().collect();
    TokenBatch::new(&refs, vec![0, 1, 1])
}

/// Replaces every parameter with N(0, 0.2²) noise (gains around 1) so no
/// gradient is trivially zero.
fn randomize(model: &mut EncoderModel, seed: u64) {
    let mut rng = rng::stream(seed, &[0x9a1d]);
    let normal = Normal::new(0.0, 0.2).expect("valid std");
    let ids: Vec<ParamId> = model.store().ids().collect();
    for id in ids {
        let gain = model.store().name(id).ends_with("gain");
        for x in model.store_mut().get_mut(id).data_mut() {
            *x = (normal.sample(&mut rng) + if gain { 1.0 } else { 0.0 }) as Float;
        }
    }
}

type LossFn = dyn Fn(&EncoderModel) -> Result<(f64, Gradients), ModelError>;

fn check_model(model: &mut EncoderModel, loss: &LossFn, opts: &GradcheckOptions, seed: u64) -> Result<(f64, usize), String> {
    let (_, grads) = loss(model).map_err(|e| e.to_string())?;
    let mut coords: Vec<(ParamId, usize)> = Vec::new();
    for id in model.store().ids() {
        for i in 0..model.store().get(id).len() {
            coords.push((id, i));
        }
    }
    let mut rng = rng::stream(seed, &[0xc00d]);
    let chosen: Vec<usize> = if coords.len() <= opts.encoder_coordinates {
        (0..coords.len()).collect()
    } else {
        let mut v = sample(&mut rng, coords.len(), opts.encoder_coordinates).into_vec();
        v.sort_unstable();
        v
    };
    let mut analytic = Vec::with_capacity(chosen.len());
    let mut numeric = Vec::with_capacity(chosen.len());
    for &c in &chosen {
        let (id, i) = coords[c];
        analytic.push(grads.iter().find(|(g, _)| *g == id).map_or(0.0, |(_, g)| g[i] as f64));
        let original = model.store().get(id).data()[i];
        let mut eval = |delta: f64| -> Result<f64, String> {
            model.store_mut().get_mut(id).data_mut()[i] = original + delta as Float;
            let v = loss(model).map_err(|e| e.to_string())?.0;
            Ok(v)
        };
        let plus = eval(opts.step)?;
        let minus = eval(-opts.step)?;
        model.store_mut().get_mut(id).data_mut()[i] = original;
        numeric.push((plus - minus) / (2.0 * opts.step));
    }
    Ok((relative_error(&analytic, &numeric), chosen.len()))
}

fn classification_loss(model: &EncoderModel) -> Result<(f64, Gradients), ModelError> {
    let batch = tiny_batch();
    let mut pass = model.pass();
    let loss = pass.classification_loss(&batch, false, &mut rng::stream(0, &[]))?;
    pass.backward(loss)?;
    Ok((pass.tape.value(loss).data()[0] as f64, pass.gradients()))
}

/// One tiny encoder's classification-loss check.
pub fn encoder_check(variant: Variant, activation: ActivationKind, opts: &GradcheckOptions) -> CheckItem {
    let seed = rng::mix_labels(opts.seed, &[variant.name(), activation.name()]);
    let name = format!("{variant}/{activation}");
    let result = build_model(&tiny_config(variant, activation), seed)
        .map_err(|e| e.to_string())
        .and_then(|mut model| {
            randomize(&mut model, seed);
            check_model(&mut model, &classification_loss, opts, seed)
        });
    item("encoder", name, result, opts.tolerance)
}

pub fn encoder_checks(opts: &GradcheckOptions) -> Vec<CheckItem> {
    Variant::ALL
        .iter()
        .flat_map(|&v| ActivationKind::ALL.iter().map(move |&a| (v, a)))
        .map(|(v, a)| encoder_check(v, a, opts))
        .collect()
}

// ---------------------------------------------------------------- objectives

fn objective_loss(model: &EncoderModel) -> Result<(f64, Gradients), ModelError> {
    let batch = tiny_batch();
    let mut rng = rng::stream(0, &[]);
    let mut pass = model.pass();
    let mlm = mask_mlm(&batch, 0.4, false, 0, 3)?;
    let loss = match model.config().variant {
        Variant::Bert | Variant::Albert => {
            let (h, l) = pass.mlm_loss(&batch, &mlm, false, &mut rng)?;
            let labels = if model.config().variant == Variant::Bert {
                [PairLabel::IsNext, PairLabel::NotNext, PairLabel::IsNext]
            } else {
                [PairLabel::Swapped, PairLabel::InOrder, PairLabel::InOrder]
            };
            let pair = pass.pair_loss(&h, &labels)?;
            match l {
                Some(l) => pass.tape.add(l, pair)?,
                None => pair,
            }
        }
        Variant::Xlnet => {
            let sample = make_plm_sample(&batch, 5, 0);
            pass.plm_loss(&batch, &sample, false, &mut rng)?.ok_or(ModelError::EmptyBatch)?
        }
        Variant::Electra => pass.electra_step(&batch, &ObjectiveSample::Mlm(mlm), false, &mut rng)?.total,
        Variant::Roberta | Variant::Fnet => pass.mlm_loss(&batch, &mlm, false, &mut rng)?.1.ok_or(ModelError::EmptyBatch)?,
    };
    pass.backward(loss)?;
    Ok((pass.tape.value(loss).data()[0] as f64, pass.gradients()))
}

/// Pretraining-loss checks, one per variant with its own recipe.
pub fn objective_checks(opts: &GradcheckOptions) -> Vec<CheckItem> {
    Variant::ALL
        .iter()
        .map(|&variant| {
            let seed = rng::mix_labels(opts.seed, &[variant.name(), "objective"]);
            let result = build_model(&tiny_config(variant, ActivationKind::Gelu), seed)
                .map_err(|e| e.to_string())
                .and_then(|mut model| {
                    randomize(&mut model, seed);
                    check_model(&mut model, &objective_loss, opts, seed)
                });
            item("objective", variant.name(), result, opts.tolerance)
        })
        .collect()
}
