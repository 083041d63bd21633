use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::SpecError;
use crate::activations::ActivationKind;
use crate::data::MAX_POSITIONS;
use crate::model::{EncoderConfig, Mixing, Variant};
use crate::rng;
use crate::train::{PretrainObjective, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    Synth,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSpec {
    pub source: DataKind,
    /// Synthetic corpus size.
    pub n: usize,
    /// Synthetic corpus seed.
    pub seed: u64,
    /// CSV file, relative to the spec file.
    pub path: Option<PathBuf>,
    pub max_len: usize,
    pub vocab_size: usize,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            source: DataKind::Synth,
            n: 200,
            seed: 7,
            path: None,
            max_len: 128,
            vocab_size: 5000,
        }
    }
}

/// Explicit `EncoderConfig` fields; unset fields keep the desk preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelOverrides {
    pub num_layers: Option<usize>,
    pub hidden: Option<usize>,
    pub num_heads: Option<usize>,
    pub ffn_dim: Option<usize>,
    pub embed_dim: Option<usize>,
    pub max_positions: Option<usize>,
    pub num_segments: Option<usize>,
    pub mixing: Option<Mixing>,
    pub share_layer_params: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainOverrides {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub eps: Option<f64>,
    /// Replaces the per-activation dropout rule for every cell.
    pub attention_dropout: Option<f64>,
    pub abstain_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainSpec {
    pub epochs: usize,
    /// Defaults to each variant's own recipe.
    #[serde(default)]
    pub objective: Option<PretrainObjective>,
}

/// A benchmark run: data, the variant × activation grid and overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSpec {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub variants: Vec<Variant>,
    pub activations: Vec<ActivationKind>,
    pub parallelism: usize,
    /// Record wall-clock seconds; off makes every output file reproducible.
    pub timing: bool,
    pub save_models: bool,
    pub data: DataSpec,
    pub model: ModelOverrides,
    pub train: TrainOverrides,
    pub pretrain: Option<PretrainSpec>,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            out_dir: PathBuf::from("bench-out"),
            variants: Variant::ALL.to_vec(),
            activations: ActivationKind::ALL.to_vec(),
            parallelism: 1,
            timing: true,
            save_models: false,
            data: DataSpec::default(),
            model: ModelOverrides::default(),
            train: TrainOverrides::default(),
            pretrain: None,
        }
    }
}

/// Fully resolved settings for one matrix cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellPlan {
    pub variant: Variant,
    pub activation: ActivationKind,
    pub seed: u64,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub pretrain: Option<(PretrainObjective, usize)>,
}

impl BenchSpec {
    /// Parses TOML; relative paths are resolved against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, SpecError> {
        let mut spec: BenchSpec = toml::from_str(text).map_err(|e| SpecError::Parse(e.to_string()))?;
        if spec.out_dir.is_relative() {
            spec.out_dir = base_dir.join(&spec.out_dir);
        }
        if let Some(p) = &mut spec.data.path {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, SpecError> {
        let text = std::fs::read_to_string(path).map_err(|e| SpecError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    /// Checks the spec and every cell's effective configuration.
    pub fn validate(&self) -> Result<(), SpecError> {
        if self.variants.is_empty() {
            return Err(SpecError::field("variants", "at least one variant required"));
        }
        if self.activations.is_empty() {
            return Err(SpecError::field("activations", "at least one activation required"));
        }
        for (i, v) in self.variants.iter().enumerate() {
            if self.variants[..i].contains(v) {
                return Err(SpecError::field("variants", format!("{v} listed twice")));
            }
        }
        for (i, a) in self.activations.iter().enumerate() {
            if self.activations[..i].contains(a) {
                return Err(SpecError::field("activations", format!("{a} listed twice")));
            }
        }
        if self.parallelism == 0 {
            return Err(SpecError::field("parallelism", "must be positive"));
        }
        match self.data.source {
            DataKind::Synth if self.data.n < 5 => {
                return Err(SpecError::field("data.n", "need at least 5 records to split"));
            }
            DataKind::Csv if self.data.path.is_none() => {
                return Err(SpecError::field("data.path", "required when source = \"csv\""));
            }
            _ => {}
        }
        if self.data.max_len < 3 || self.data.max_len > MAX_POSITIONS {
            return Err(SpecError::field("data.max_len", format!("must lie in [3, {MAX_POSITIONS}]")));
        }
        if self.data.vocab_size <= crate::data::NUM_SPECIAL {
            return Err(SpecError::field("data.vocab_size", "must exceed the reserved tokens"));
        }
        if let Some(p) = &self.pretrain {
            if p.epochs == 0 {
                return Err(SpecError::field("pretrain.epochs", "must be positive"));
            }
        }
        self.cells(self.data.vocab_size).map(|_| ())
    }

    /// Cell plans in sorted (variant, activation) name order.
    pub fn cells(&self, vocab_size: usize) -> Result<Vec<CellPlan>, SpecError> {
        let mut pairs: Vec<(Variant, ActivationKind)> = self
            .variants
            .iter()
            .flat_map(|&v| self.activations.iter().map(move |&a| (v, a)))
            .collect();
        pairs.sort_by_key(|(v, a)| (v.name(), a.name()));
        pairs.into_iter().map(|(v, a)| self.cell(v, a, vocab_size)).collect()
    }

    fn cell(&self, variant: Variant, activation: ActivationKind, vocab_size: usize) -> Result<CellPlan, SpecError> {
        let seed = rng::mix_labels(self.seed, &[variant.name(), activation.name()]);
        let o = &self.model;
        let mut e = EncoderConfig::desk(variant, vocab_size);
        e.activation = activation;
        e.num_layers = o.num_layers.unwrap_or(e.num_layers);
        e.hidden = o.hidden.unwrap_or(e.hidden);
        e.num_heads = o.num_heads.unwrap_or(e.num_heads);
        e.ffn_dim = o.ffn_dim.unwrap_or(e.ffn_dim);
        e.max_positions = o.max_positions.unwrap_or(e.max_positions);
        e.num_segments = o.num_segments.unwrap_or(e.num_segments);
        e.embed_dim = match o.embed_dim {
            Some(d) => d,
            None if variant == Variant::Albert => (e.hidden / 4).max(1),
            None => e.hidden,
        };
        e.mixing = o.mixing.unwrap_or(e.mixing);
        e.share_layer_params = o.share_layer_params.unwrap_or(e.share_layer_params);

        let t = &self.train;
        let mut tc = TrainConfig::new(activation, seed);
        tc.epochs = t.epochs.unwrap_or(tc.epochs);
        tc.batch_size = t.batch_size.unwrap_or(tc.batch_size);
        tc.adam.learning_rate = t.learning_rate.unwrap_or(tc.adam.learning_rate);
        tc.adam.beta1 = t.beta1.unwrap_or(tc.adam.beta1);
        tc.adam.beta2 = t.beta2.unwrap_or(tc.adam.beta2);
        tc.adam.eps = t.eps.unwrap_or(tc.adam.eps);
        tc.abstain_threshold = t.abstain_threshold.unwrap_or(tc.abstain_threshold);
        if let Some(p) = t.attention_dropout {
            tc = tc.with_attention_dropout(p);
        }
        tc.max_len = self.data.max_len;
        e.attention_dropout = tc.attention_dropout;

        let cell = format!("{variant}/{activation}");
        e.validate()
            .map_err(|err| SpecError::field(format!("model.{}", err.field), format!("{cell}: {}", err.message)))?;
        if e.variant == Variant::Electra {
            e.generator_config().validate().map_err(|err| {
                SpecError::field(format!("model.{}", err.field), format!("{cell} generator: {}", err.message))
            })?;
        }
        tc.validate().map_err(|err| match err {
            crate::train::TrainError::Config { field, message } => {
                SpecError::field(format!("train.{field}"), format!("{cell}: {message}"))
            }
            other => SpecError::field("train", other.to_string()),
        })?;
        if self.data.max_len > e.max_positions {
            return Err(SpecError::field(
                "data.max_len",
                format!("{} exceeds max_positions {}", self.data.max_len, e.max_positions),
            ));
        }
        let pretrain = match &self.pretrain {
            None => None,
            Some(p) => {
                let objective = p.objective.unwrap_or_else(|| PretrainObjective::recipe(variant));
                if !objective.supports(variant) {
                    return Err(SpecError::field(
                        "pretrain.objective",
                        format!("{objective} is not available for {variant}"),
                    ));
                }
                Some((objective, p.epochs))
            }
        };
        Ok(CellPlan {
            variant,
            activation,
            seed,
            encoder: e,
            train: tc,
            pretrain,
        })
    }
}
