use rand::Rng;

use super::{ConfigError, EncoderConfig, Mixing, ModelError, ParamId, ParamStore, Variant};
use crate::data::TokenBatch;
use crate::objectives::{rtd_corrupt, MlmSample, ObjectiveKind, ObjectiveSample, PairLabel, PlmMask, PlmSample, RtdLabel, RtdSample};
use crate::rng;
use crate::tensor::{Float, Tape, Tensor, Var};

const LN_EPS: Float = 1e-5;
/// Weight of the discriminator loss in the ELECTRA objective.
pub const ELECTRA_DISC_WEIGHT: Float = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Dense {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Norm {
    gain: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Attention {
    query: Dense,
    key: Dense,
    value: Dense,
    output: Dense,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Layer {
    attention: Option<Attention>,
    ln1: Norm,
    ffn_in: Dense,
    ffn_out: Dense,
    ln2: Norm,
}

#[derive(Debug, Clone, PartialEq)]
struct Body {
    token: ParamId,
    segment: ParamId,
    position: ParamId,
    embed_ln: Norm,
    projection: Option<Dense>,
    layers: Vec<Layer>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct MlmHead {
    transform: Dense,
    ln: Norm,
    bias: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct RtdHead {
    dense: Dense,
    out: Dense,
}

#[derive(Debug, Clone, PartialEq)]
struct Generator {
    config: EncoderConfig,
    body: Body,
    mlm: MlmHead,
}

/// A built encoder: parameters plus the layout that addresses them.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    config: EncoderConfig,
    store: ParamStore,
    body: Body,
    pooler: Dense,
    classifier: Dense,
    mlm: Option<MlmHead>,
    pair: Option<Dense>,
    rtd: Option<RtdHead>,
    generator: Option<Generator>,
}

struct Builder<'a, R: Rng> {
    store: &'a mut ParamStore,
    rng: &'a mut R,
}

impl<R: Rng> Builder<'_, R> {
    fn dense(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Dense {
        Dense {
            w: self.store.normal(format!("{name}.weight"), &[fan_in, fan_out], self.rng),
            b: self.store.zeros(format!("{name}.bias"), &[fan_out]),
        }
    }

    fn norm(&mut self, name: &str, width: usize) -> Norm {
        Norm {
            gain: self.store.ones(format!("{name}.gain"), &[width]),
            bias: self.store.zeros(format!("{name}.bias"), &[width]),
        }
    }

    fn layer(&mut self, prefix: &str, c: &EncoderConfig) -> Layer {
        let h = c.hidden;
        let attention = (c.mixing == Mixing::SelfAttention).then(|| Attention {
            query: self.dense(&format!("{prefix}.mixing.query"), h, h),
            key: self.dense(&format!("{prefix}.mixing.key"), h, h),
            value: self.dense(&format!("{prefix}.mixing.value"), h, h),
            output: self.dense(&format!("{prefix}.mixing.output"), h, h),
        });
        Layer {
            attention,
            ln1: self.norm(&format!("{prefix}.ln1"), h),
            ffn_in: self.dense(&format!("{prefix}.ffn.in"), h, c.ffn_dim),
            ffn_out: self.dense(&format!("{prefix}.ffn.out"), c.ffn_dim, h),
            ln2: self.norm(&format!("{prefix}.ln2"), h),
        }
    }

    fn body(&mut self, prefix: &str, c: &EncoderConfig) -> Body {
        let e = c.embed_dim;
        let token = self.store.normal(format!("{prefix}embeddings.token"), &[c.vocab_size, e], self.rng);
        let segment = self.store.normal(format!("{prefix}embeddings.segment"), &[c.num_segments, e], self.rng);
        let position = self.store.normal(format!("{prefix}embeddings.position"), &[c.max_positions, e], self.rng);
        let embed_ln = self.norm(&format!("{prefix}embeddings.ln"), e);
        let projection = (e < c.hidden).then(|| self.dense(&format!("{prefix}embeddings.projection"), e, c.hidden));
        let layers = if c.share_layer_params {
            vec![self.layer(&format!("{prefix}layers.shared"), c); c.num_layers]
        } else {
            (0..c.num_layers)
                .map(|i| self.layer(&format!("{prefix}layers.{i}"), c))
                .collect()
        };
        Body {
            token,
            segment,
            position,
            embed_ln,
            projection,
            layers,
        }
    }

    fn mlm(&mut self, prefix: &str, c: &EncoderConfig) -> MlmHead {
        MlmHead {
            transform: self.dense(&format!("{prefix}mlm.transform"), c.hidden, c.embed_dim),
            ln: self.norm(&format!("{prefix}mlm.ln"), c.embed_dim),
            bias: self.store.zeros(format!("{prefix}mlm.bias"), &[c.vocab_size]),
        }
    }
}

/// Builds and initializes a model: weights from N(0, 0.02²), biases 0,
/// layer-norm gains 1. Deterministic in `(config, seed)`.
pub fn build_model(config: &EncoderConfig, seed: u64) -> Result<EncoderModel, ConfigError> {
    config.validate()?;
    let generator_config = (config.variant == Variant::Electra).then(|| config.generator_config());
    if let Some(g) = &generator_config {
        g.validate()?;
    }
    let mut store = ParamStore::new();
    let mut rng = rng::stream(seed, &[0xb0d7]);
    let mut b = Builder {
        store: &mut store,
        rng: &mut rng,
    };
    let h = config.hidden;
    let body = b.body("", config);
    let pooler = b.dense("pooler", h, h);
    let classifier = b.dense("classifier", h, config.num_classes);
    let mlm = config.variant.has_mlm_head().then(|| b.mlm("", config));
    let pair = config.variant.has_pair_head().then(|| b.dense("pair", h, 2));
    let rtd = (config.variant == Variant::Electra).then(|| RtdHead {
        dense: b.dense("rtd.dense", h, h),
        out: b.dense("rtd.out", h, 2),
    });
    let generator = generator_config.map(|g| Generator {
        body: b.body("generator.", &g),
        mlm: b.mlm("generator.", &g),
        config: g,
    });
    Ok(EncoderModel {
        config: config.clone(),
        store,
        body,
        pooler,
        classifier,
        mlm,
        pair,
        rtd,
        generator,
    })
}

fn dense_count(fan_in: usize, fan_out: usize) -> usize {
    fan_in * fan_out + fan_out
}

fn body_count(c: &EncoderConfig) -> usize {
    let (h, e) = (c.hidden, c.embed_dim);
    let embeddings = (c.vocab_size + c.num_segments + c.max_positions) * e + 2 * e;
    let projection = if e < h { dense_count(e, h) } else { 0 };
    let mixing = match c.mixing {
        Mixing::SelfAttention => 4 * dense_count(h, h),
        Mixing::Fourier => 0,
    };
    let layer = mixing + dense_count(h, c.ffn_dim) + dense_count(c.ffn_dim, h) + 4 * h;
    let stored_layers = if c.share_layer_params { 1 } else { c.num_layers };
    embeddings + projection + stored_layers * layer
}

fn mlm_count(c: &EncoderConfig) -> usize {
    dense_count(c.hidden, c.embed_dim) + 2 * c.embed_dim + c.vocab_size
}

/// Closed-form number of trainable scalars in `build_model(config, _)`,
/// including the variant's pretraining heads (and generator, for ELECTRA).
pub fn count_parameters(config: &EncoderConfig) -> usize {
    let h = config.hidden;
    let mut total = body_count(config) + dense_count(h, h) + dense_count(h, config.num_classes);
    if config.variant.has_mlm_head() {
        total += mlm_count(config);
    }
    if config.variant.has_pair_head() {
        total += dense_count(h, 2);
    }
    if config.variant == Variant::Electra {
        let g = config.generator_config();
        total += dense_count(h, h) + dense_count(h, 2) + body_count(&g) + mlm_count(&g);
    }
    total
}

impl EncoderModel {
    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Sets the attention-probability dropout rate used in training passes.
    pub fn set_attention_dropout(&mut self, p: f64) -> Result<(), ConfigError> {
        let mut c = self.config.clone();
        c.attention_dropout = p;
        c.validate()?;
        self.config = c;
        if let Some(g) = &mut self.generator {
            g.config.attention_dropout = p;
        }
        Ok(())
    }

    pub fn num_parameters(&self) -> usize {
        self.store.num_scalars()
    }

    /// Generator config, for ELECTRA models.
    pub fn generator_config(&self) -> Option<&EncoderConfig> {
        self.generator.as_ref().map(|g| &g.config)
    }

    /// Parameter ids used by encoder layer `i`, in a fixed order. Shared
    /// layers return identical lists.
    pub fn layer_param_ids(&self, i: usize) -> Vec<ParamId> {
        let l = &self.body.layers[i];
        let mut ids = Vec::new();
        if let Some(a) = &l.attention {
            for d in [a.query, a.key, a.value, a.output] {
                ids.extend([d.w, d.b]);
            }
        }
        for d in [l.ffn_in, l.ffn_out] {
            ids.extend([d.w, d.b]);
        }
        for n in [l.ln1, l.ln2] {
            ids.extend([n.gain, n.bias]);
        }
        ids
    }

    /// Scalars held by the token-mixing sublayers of the main encoder.
    pub fn mixing_parameter_count(&self) -> usize {
        self.store
            .ids()
            .filter(|&id| {
                let name = self.store.name(id);
                !name.starts_with("generator.") && name.contains(".mixing.")
            })
            .map(|id| self.store.get(id).len())
            .sum()
    }

    pub fn pass(&self) -> Pass<'_> {
        Pass::new(self)
    }

    /// Classification logits `[batch × num_classes]` in evaluation mode.
    pub fn logits(&self, batch: &TokenBatch) -> Result<Tensor, ModelError> {
        let mut pass = self.pass();
        let mut rng = rng::stream(0, &[]);
        let h = pass.encode(&SequenceInput::from_batch(batch), false, &mut rng)?;
        let logits = pass.classify(&h)?;
        Ok(pass.tape.value(logits).detached())
    }

    /// Forward pass. A PLM objective swaps in its permuted inputs and
    /// attention masks; MLM and PLM objectives also produce per-token
    /// vocabulary logits at their target positions, and an RTD objective
    /// per-token replaced/original logits.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        batch: &TokenBatch,
        training: bool,
        objective: Option<&ObjectiveSample>,
        rng: &mut R,
    ) -> Result<ForwardOutput, ModelError> {
        let mut pass = self.pass();
        let mut input = SequenceInput::from_batch(batch);
        match objective {
            Some(ObjectiveSample::Mlm(s)) => input.ids = &s.input_ids,
            Some(ObjectiveSample::Plm(s)) => {
                input.ids = &s.input_ids;
                input.masks = Some(&s.masks);
            }
            Some(ObjectiveSample::Rtd(s)) => input.ids = &s.corrupted_ids,
            _ => {}
        }
        let h = pass.encode(&input, training, rng)?;
        let logits = pass.classify(&h)?;
        let token_logits = match objective {
            Some(ObjectiveSample::Mlm(s)) if !s.positions.is_empty() => Some(pass.mlm_logits(&h, &s.positions)?),
            Some(ObjectiveSample::Plm(s)) if !s.targets.is_empty() => Some(pass.mlm_logits(&h, &s.targets)?),
            Some(ObjectiveSample::Rtd(_)) => Some(pass.rtd_logits(&h)?),
            _ => None,
        };
        Ok(ForwardOutput {
            logits: pass.tape.value(logits).detached(),
            token_logits: token_logits.map(|v| pass.tape.value(v).detached()),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub logits: Tensor,
    pub token_logits: Option<Tensor>,
}

/// Token ids to encode, with their layout.
#[derive(Debug, Clone)]
pub struct SequenceInput<'a> {
    pub ids: &'a [Vec<usize>],
    pub segment_ids: &'a [Vec<usize>],
    /// Number of real (non-pad) leading positions per row.
    pub lengths: Vec<usize>,
    /// Per-row attention patterns replacing full attention (PLM).
    pub masks: Option<&'a [PlmMask]>,
}

impl<'a> SequenceInput<'a> {
    pub fn from_batch(batch: &'a TokenBatch) -> Self {
        Self {
            ids: &batch.ids,
            segment_ids: &batch.segment_ids,
            lengths: batch
                .pad_mask
                .iter()
                .map(|m| m.iter().take_while(|&&keep| keep).count())
                .collect(),
            masks: None,
        }
    }
}

/// Encoder output for a batch. Pad positions are dropped and the real
/// positions of all rows are packed into one `[total × hidden]` matrix.
#[derive(Debug, Clone)]
pub struct Hidden {
    pub x: Var,
    pub offsets: Vec<usize>,
    pub lengths: Vec<usize>,
}

impl Hidden {
    pub fn index(&self, row: usize, pos: usize) -> usize {
        self.offsets[row] + pos
    }

    pub fn total(&self) -> usize {
        self.lengths.iter().sum()
    }
}

#[derive(Debug, Clone)]
pub struct ElectraLosses {
    pub generator: Var,
    pub discriminator: Var,
    /// `generator + λ·discriminator`.
    pub total: Var,
    pub rtd: RtdSample,
}

/// One differentiation scope over a model: parameters are bound to tape
/// leaves on first use.
pub struct Pass<'m> {
    model: &'m EncoderModel,
    pub tape: Tape,
    vars: Vec<Option<Var>>,
}

impl<'m> Pass<'m> {
    pub fn new(model: &'m EncoderModel) -> Self {
        Self {
            model,
            tape: Tape::new(),
            vars: vec![None; model.store.len()],
        }
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.vars[id.0] {
            return v;
        }
        let v = self.tape.param(self.model.store.get(id));
        self.vars[id.0] = Some(v);
        v
    }

    pub fn backward(&mut self, loss: Var) -> Result<(), ModelError> {
        Ok(self.tape.backward(loss)?)
    }

    /// Gradients of every parameter that took part in the pass.
    pub fn gradients(&self) -> Vec<(ParamId, Vec<Float>)> {
        self.vars
            .iter()
            .enumerate()
            .filter_map(|(i, v)| {
                let g = self.tape.grad((*v)?)?;
                Some((ParamId(i), g.to_vec()))
            })
            .collect()
    }

    fn dense(&mut self, x: Var, d: Dense) -> Result<Var, ModelError> {
        let (w, b) = (self.param(d.w), self.param(d.b));
        let y = self.tape.matmul(x, w)?;
        Ok(self.tape.add(y, b)?)
    }

    fn norm(&mut self, x: Var, n: Norm) -> Result<Var, ModelError> {
        let (g, b) = (self.param(n.gain), self.param(n.bias));
        Ok(self.tape.layer_norm(x, g, b, LN_EPS)?)
    }

    /// Runs the main encoder body.
    pub fn encode<R: Rng + ?Sized>(
        &mut self,
        input: &SequenceInput<'_>,
        training: bool,
        rng: &mut R,
    ) -> Result<Hidden, ModelError> {
        let model = self.model;
        self.run_body(&model.body, &model.config, input, training, rng)
    }

    fn run_body<R: Rng + ?Sized>(
        &mut self,
        body: &Body,
        c: &EncoderConfig,
        input: &SequenceInput<'_>,
        training: bool,
        rng: &mut R,
    ) -> Result<Hidden, ModelError> {
        if input.lengths.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let mut ids = Vec::new();
        let mut segments = Vec::new();
        let mut positions = Vec::new();
        let mut offsets = Vec::with_capacity(input.lengths.len());
        for (r, &len) in input.lengths.iter().enumerate() {
            if len > c.max_positions {
                return Err(ModelError::SequenceTooLong {
                    len,
                    max: c.max_positions,
                });
            }
            offsets.push(ids.len());
            for p in 0..len {
                let id = input.ids[r][p];
                if id >= c.vocab_size {
                    return Err(ModelError::TokenOutOfRange {
                        id,
                        vocab_size: c.vocab_size,
                    });
                }
                ids.push(id);
                segments.push(input.segment_ids[r][p]);
                positions.push(p);
            }
        }
        let hidden = Hidden {
            x: self.embed(body, &ids, &segments, &positions)?,
            offsets,
            lengths: input.lengths.clone(),
        };
        let mut x = hidden.x;
        for layer in &body.layers {
            let mixed = match &layer.attention {
                Some(att) => self.attention(x, att, c, &hidden, input.masks, training, rng)?,
                None => self.fourier(x, &hidden)?,
            };
            let y = self.tape.add(x, mixed)?;
            let y = self.norm(y, layer.ln1)?;
            let f = self.dense(y, layer.ffn_in)?;
            let f = self.tape.activate(f, c.activation)?;
            let f = self.dense(f, layer.ffn_out)?;
            let z = self.tape.add(y, f)?;
            x = self.norm(z, layer.ln2)?;
        }
        Ok(Hidden { x, ..hidden })
    }

    /// Token-mixing sublayer (self-attention or Fourier) of the first
    /// encoder layer applied to `h`, in evaluation mode.
    pub fn mix(&mut self, h: &Hidden) -> Result<Var, ModelError> {
        let model = self.model;
        match &model.body.layers[0].attention {
            Some(att) => self.attention(h.x, att, &model.config, h, None, false, &mut rng::stream(0, &[])),
            None => self.fourier(h.x, h),
        }
    }

    fn embed(&mut self, body: &Body, ids: &[usize], segments: &[usize], positions: &[usize]) -> Result<Var, ModelError> {
        let (tok, seg, pos) = (self.param(body.token), self.param(body.segment), self.param(body.position));
        let t = self.tape.embedding_lookup(tok, ids)?;
        let s = self.tape.embedding_lookup(seg, segments)?;
        let p = self.tape.embedding_lookup(pos, positions)?;
        let sum = self.tape.add(t, s)?;
        let sum = self.tape.add(sum, p)?;
        let e = self.norm(sum, body.embed_ln)?;
        match body.projection {
            Some(d) => self.dense(e, d),
            None => Ok(e),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn attention<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        att: &Attention,
        c: &EncoderConfig,
        layout: &Hidden,
        masks: Option<&[PlmMask]>,
        training: bool,
        rng: &mut R,
    ) -> Result<Var, ModelError> {
        let head_dim = c.hidden / c.num_heads;
        let q = self.dense(x, att.query)?;
        let q = self.tape.scale(q, 1.0 / (head_dim as Float).sqrt())?;
        let k = self.dense(x, att.key)?;
        let v = self.dense(x, att.value)?;
        let mut rows = Vec::with_capacity(layout.lengths.len());
        for (r, (&off, &len)) in layout.offsets.iter().zip(&layout.lengths).enumerate() {
            let span = off..off + len;
            let mask: Option<Vec<bool>> = masks.map(|m| {
                let m = &m[r];
                (0..len)
                    .flat_map(|i| (0..len).map(move |j| (i, j)))
                    .map(|(i, j)| m.attends(i, j))
                    .collect()
            });
            let mut heads = Vec::with_capacity(c.num_heads);
            for h in 0..c.num_heads {
                let cols = h * head_dim..(h + 1) * head_dim;
                let qs = self.tape.slice(q, span.clone(), cols.clone())?;
                let ks = self.tape.slice(k, span.clone(), cols.clone())?;
                let vs = self.tape.slice(v, span.clone(), cols)?;
                let scores = self.tape.matmul_bt(qs, ks)?;
                let probs = self.tape.masked_softmax_rows(scores, mask.as_deref())?;
                let probs = self.tape.dropout(probs, c.attention_dropout as Float, training, rng)?;
                heads.push(self.tape.matmul(probs, vs)?);
            }
            rows.push(self.concat(&heads, 1)?);
        }
        let context = self.concat(&rows, 0)?;
        self.dense(context, att.output)
    }

    /// Fourier mixing over each row's real positions.
    fn fourier(&mut self, x: Var, layout: &Hidden) -> Result<Var, ModelError> {
        let mut rows = Vec::with_capacity(layout.lengths.len());
        for (&off, &len) in layout.offsets.iter().zip(&layout.lengths) {
            let block = self.tape.slice_rows(x, off..off + len)?;
            rows.push(self.tape.dft2_real(block)?);
        }
        self.concat(&rows, 0)
    }

    fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, ModelError> {
        match parts {
            [single] => Ok(*single),
            _ => Ok(self.tape.concat(parts, axis)?),
        }
    }

    /// `tanh(W·h[CLS] + b)`.
    pub fn pooled(&mut self, h: &Hidden) -> Result<Var, ModelError> {
        let cls = self.tape.embedding_lookup(h.x, &h.offsets)?;
        let p = self.dense(cls, self.model.pooler)?;
        Ok(self.tape.tanh(p)?)
    }

    /// Classification logits `[batch × num_classes]` from the [CLS] state.
    pub fn classify(&mut self, h: &Hidden) -> Result<Var, ModelError> {
        let pooled = self.pooled(h)?;
        self.dense(pooled, self.model.classifier)
    }

    /// NSP/SOP logits `[batch × 2]`.
    pub fn pair_logits(&mut self, h: &Hidden) -> Result<Var, ModelError> {
        let head = self.model.pair.ok_or(ModelError::MissingHead {
            variant: self.model.config.variant,
            head: "pair",
        })?;
        let pooled = self.pooled(h)?;
        self.dense(pooled, head)
    }

    /// Vocabulary logits `[positions × vocab]` at `(row, position)` targets.
    /// The output projection is tied to the token embedding table.
    pub fn mlm_logits(&mut self, h: &Hidden, targets: &[(usize, usize)]) -> Result<Var, ModelError> {
        let model = self.model;
        let head = model.mlm.ok_or(ModelError::MissingHead {
            variant: model.config.variant,
            head: "mlm",
        })?;
        self.mlm_logits_with(&head, model.body.token, model.config.activation, h, targets)
    }

    fn mlm_logits_with(
        &mut self,
        head: &MlmHead,
        token_table: ParamId,
        activation: crate::activations::ActivationKind,
        h: &Hidden,
        targets: &[(usize, usize)],
    ) -> Result<Var, ModelError> {
        let mut rows = Vec::with_capacity(targets.len());
        for &(r, p) in targets {
            if r >= h.lengths.len() || p >= h.lengths[r] {
                return Err(crate::tensor::TensorError::IndexOutOfRange {
                    op: "mlm_logits",
                    index: p,
                    len: h.lengths.get(r).copied().unwrap_or(0),
                }
                .into());
            }
            rows.push(h.index(r, p));
        }
        let x = self.tape.embedding_lookup(h.x, &rows)?;
        let t = self.dense(x, head.transform)?;
        let t = self.tape.activate(t, activation)?;
        let t = self.norm(t, head.ln)?;
        let table = self.param(token_table);
        let logits = self.tape.matmul_bt(t, table)?;
        let bias = self.param(head.bias);
        Ok(self.tape.add(logits, bias)?)
    }

    /// Replaced/original logits `[total real positions × 2]`.
    pub fn rtd_logits(&mut self, h: &Hidden) -> Result<Var, ModelError> {
        let head = self.model.rtd.ok_or(ModelError::MissingHead {
            variant: self.model.config.variant,
            head: "rtd",
        })?;
        let t = self.dense(h.x, head.dense)?;
        let t = self.tape.activate(t, self.model.config.activation)?;
        self.dense(t, head.out)
    }

    /// Mean classification cross-entropy for a batch.
    pub fn classification_loss<R: Rng + ?Sized>(
        &mut self,
        batch: &TokenBatch,
        training: bool,
        rng: &mut R,
    ) -> Result<Var, ModelError> {
        let h = self.encode(&SequenceInput::from_batch(batch), training, rng)?;
        let logits = self.classify(&h)?;
        Ok(self.tape.cross_entropy(logits, &batch.labels)?)
    }

    /// Encodes the masked inputs and, unless nothing was masked, the
    /// masked-LM loss.
    pub fn mlm_loss<R: Rng + ?Sized>(
        &mut self,
        batch: &TokenBatch,
        sample: &MlmSample,
        training: bool,
        rng: &mut R,
    ) -> Result<(Hidden, Option<Var>), ModelError> {
        let mut input = SequenceInput::from_batch(batch);
        input.ids = &sample.input_ids;
        let h = self.encode(&input, training, rng)?;
        if sample.positions.is_empty() {
            return Ok((h, None));
        }
        let logits = self.mlm_logits(&h, &sample.positions)?;
        let loss = self.tape.cross_entropy(logits, &sample.original_ids)?;
        Ok((h, Some(loss)))
    }

    /// Permutation-LM loss over the sample's targets.
    pub fn plm_loss<R: Rng + ?Sized>(
        &mut self,
        batch: &TokenBatch,
        sample: &PlmSample,
        training: bool,
        rng: &mut R,
    ) -> Result<Option<Var>, ModelError> {
        if sample.targets.is_empty() {
            return Ok(None);
        }
        let mut input = SequenceInput::from_batch(batch);
        input.ids = &sample.input_ids;
        input.masks = Some(&sample.masks);
        let h = self.encode(&input, training, rng)?;
        let logits = self.mlm_logits(&h, &sample.targets)?;
        Ok(Some(self.tape.cross_entropy(logits, &sample.original_ids)?))
    }

    /// NSP/SOP cross-entropy from an encoded batch.
    pub fn pair_loss(&mut self, h: &Hidden, labels: &[PairLabel]) -> Result<Var, ModelError> {
        let logits = self.pair_logits(h)?;
        let classes: Vec<usize> = labels.iter().map(|l| l.class()).collect();
        Ok(self.tape.cross_entropy(logits, &classes)?)
    }

    /// One ELECTRA step: the generator fills the masked slots with its
    /// argmax guesses, the discriminator labels every real position as
    /// original or replaced. `total = generator + 50·discriminator`.
    pub fn electra_step<R: Rng + ?Sized>(
        &mut self,
        batch: &TokenBatch,
        objective: &ObjectiveSample,
        training: bool,
        rng: &mut R,
    ) -> Result<ElectraLosses, ModelError> {
        let ObjectiveSample::Mlm(sample) = objective else {
            return Err(ModelError::WrongObjective {
                expected: ObjectiveKind::Mlm,
                got: objective.kind(),
            });
        };
        let model = self.model;
        let missing = |head| ModelError::MissingHead {
            variant: model.config.variant,
            head,
        };
        let generator = model.generator.as_ref().ok_or(missing("generator"))?;
        if model.rtd.is_none() {
            return Err(missing("rtd"));
        }
        let (generator_loss, predictions) = if sample.positions.is_empty() {
            (self.tape.constant(Tensor::scalar(0.0)), Vec::new())
        } else {
            let mut input = SequenceInput::from_batch(batch);
            input.ids = &sample.input_ids;
            let gh = self.run_body(&generator.body, &generator.config, &input, training, rng)?;
            let logits = self.mlm_logits_with(
                &generator.mlm,
                generator.body.token,
                generator.config.activation,
                &gh,
                &sample.positions,
            )?;
            let predictions = argmax_rows(self.tape.value(logits));
            (self.tape.cross_entropy(logits, &sample.original_ids)?, predictions)
        };
        let rtd = rtd_corrupt(batch, &sample.positions, &predictions)?;
        let mut input = SequenceInput::from_batch(batch);
        input.ids = &rtd.corrupted_ids;
        let dh = self.encode(&input, training, rng)?;
        let logits = self.rtd_logits(&dh)?;
        let labels: Vec<usize> = dh
            .lengths
            .iter()
            .enumerate()
            .flat_map(|(r, &len)| rtd.labels[r][..len].iter().map(|l| usize::from(*l == RtdLabel::Replaced)))
            .collect();
        let discriminator = self.tape.cross_entropy(logits, &labels)?;
        let weighted = self.tape.scale(discriminator, ELECTRA_DISC_WEIGHT)?;
        let total = self.tape.add(generator_loss, weighted)?;
        Ok(ElectraLosses {
            generator: generator_loss,
            discriminator,
            total,
            rtd,
        })
    }
}

fn argmax_rows(t: &Tensor) -> Vec<usize> {
    let cols = *t.shape().last().expect("matrix");
    t.data()
        .chunks(cols)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, Float::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
                .0
        })
        .collect()
}
