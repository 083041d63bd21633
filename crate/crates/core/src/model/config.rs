use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ConfigError;
use crate::activations::ActivationKind;
use crate::data::{MAX_POSITIONS, NUM_SPECIAL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Albert,
    Bert,
    Electra,
    Fnet,
    Roberta,
    Xlnet,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Bert,
        Variant::Albert,
        Variant::Roberta,
        Variant::Xlnet,
        Variant::Electra,
        Variant::Fnet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Albert => "albert",
            Variant::Bert => "bert",
            Variant::Electra => "electra",
            Variant::Fnet => "fnet",
            Variant::Roberta => "roberta",
            Variant::Xlnet => "xlnet",
        }
    }

    pub fn display_label(self) -> String {
        self.name().to_uppercase()
    }

    /// Whether the variant's pretraining recipe uses a masked-LM head.
    pub fn has_mlm_head(self) -> bool {
        !matches!(self, Variant::Electra)
    }

    /// Whether the recipe carries a sentence-pair (NSP/SOP) head.
    pub fn has_pair_head(self) -> bool {
        matches!(self, Variant::Bert | Variant::Albert)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown variant {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mixing {
    SelfAttention,
    Fourier,
}

/// Full architectural description of one encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub variant: Variant,
    pub num_layers: usize,
    pub hidden: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    /// Embedding width; below `hidden` the embeddings are projected up.
    pub embed_dim: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
    pub num_segments: usize,
    pub activation: ActivationKind,
    pub attention_dropout: f64,
    pub mixing: Mixing,
    pub share_layer_params: bool,
    pub num_classes: usize,
}

impl EncoderConfig {
    /// Desk-scale preset: 2 layers, hidden 64, 4 heads, FFN 128, 128
    /// positions. ALBERT uses a 16-wide factorized embedding and shared
    /// layers; FNet swaps attention for Fourier mixing.
    pub fn desk(variant: Variant, vocab_size: usize) -> Self {
        Self {
            variant,
            num_layers: 2,
            hidden: 64,
            num_heads: 4,
            ffn_dim: 128,
            embed_dim: 64,
            vocab_size,
            max_positions: 128,
            num_segments: 2,
            activation: ActivationKind::Gelu,
            attention_dropout: 0.3,
            mixing: Mixing::SelfAttention,
            share_layer_params: false,
            num_classes: 2,
        }
        .with_variant_rules()
    }

    /// BERT-base sized: L=12, H=768, A=12, FFN 3072, 30522-token vocabulary.
    pub fn bert_base() -> Self {
        Self {
            num_layers: 12,
            hidden: 768,
            num_heads: 12,
            ffn_dim: 3072,
            embed_dim: 768,
            vocab_size: 30522,
            max_positions: MAX_POSITIONS,
            ..Self::desk(Variant::Bert, 30522)
        }
    }

    /// BERT-large sized: L=24, H=1024, A=16, FFN 4096.
    pub fn bert_large() -> Self {
        Self {
            num_layers: 24,
            hidden: 1024,
            num_heads: 16,
            ffn_dim: 4096,
            embed_dim: 1024,
            ..Self::bert_base()
        }
    }

    /// ALBERT-base sized: BERT-base body, 128-wide embeddings, shared layers.
    pub fn albert_base() -> Self {
        Self {
            variant: Variant::Albert,
            embed_dim: 128,
            share_layer_params: true,
            ..Self::bert_base()
        }
    }

    /// Applies the structural rules tied to the variant tag.
    pub fn with_variant_rules(mut self) -> Self {
        match self.variant {
            Variant::Albert => {
                self.share_layer_params = true;
                if self.embed_dim >= self.hidden {
                    self.embed_dim = (self.hidden / 4).max(1);
                }
                self.mixing = Mixing::SelfAttention;
            }
            Variant::Fnet => self.mixing = Mixing::Fourier,
            _ => self.mixing = Mixing::SelfAttention,
        }
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("num_layers", self.num_layers),
            ("hidden", self.hidden),
            ("num_heads", self.num_heads),
            ("ffn_dim", self.ffn_dim),
            ("embed_dim", self.embed_dim),
            ("max_positions", self.max_positions),
            ("num_segments", self.num_segments),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(ConfigError::new(field, "must be positive"));
            }
        }
        if self.vocab_size <= NUM_SPECIAL {
            return Err(ConfigError::new(
                "vocab_size",
                format!("must exceed the {NUM_SPECIAL} reserved tokens"),
            ));
        }
        if self.embed_dim > self.hidden {
            return Err(ConfigError::new("embed_dim", "must not exceed hidden"));
        }
        if self.max_positions > MAX_POSITIONS {
            return Err(ConfigError::new(
                "max_positions",
                format!("must be at most {MAX_POSITIONS}"),
            ));
        }
        if self.num_classes < 2 {
            return Err(ConfigError::new("num_classes", "must be at least 2"));
        }
        if !(0.0..1.0).contains(&self.attention_dropout) {
            return Err(ConfigError::new("attention_dropout", "must lie in [0, 1)"));
        }
        if self.mixing == Mixing::SelfAttention && !self.hidden.is_multiple_of(self.num_heads) {
            return Err(ConfigError::new(
                "num_heads",
                format!("hidden {} is not divisible by {} heads", self.hidden, self.num_heads),
            ));
        }
        match self.variant {
            Variant::Albert => {
                if !self.share_layer_params {
                    return Err(ConfigError::new("share_layer_params", "albert requires shared layers"));
                }
                if self.embed_dim >= self.hidden {
                    return Err(ConfigError::new("embed_dim", "albert requires embed_dim < hidden"));
                }
                if self.mixing != Mixing::SelfAttention {
                    return Err(ConfigError::new("mixing", "albert uses self_attention"));
                }
            }
            Variant::Fnet => {
                if self.mixing != Mixing::Fourier {
                    return Err(ConfigError::new("mixing", "fnet requires fourier mixing"));
                }
            }
            _ => {
                if self.mixing != Mixing::SelfAttention {
                    return Err(ConfigError::new(
                        "mixing",
                        format!("{} requires self_attention mixing", self.variant),
                    ));
                }
            }
        }
        Ok(())
    }

    /// The smaller generator paired with an ELECTRA discriminator: a quarter
    /// of the hidden size, heads, FFN width and depth (each at least 1).
    pub fn generator_config(&self) -> Self {
        let hidden = (self.hidden / 4).max(1);
        let wanted_heads = (self.num_heads / 4).max(1);
        let num_heads = (1..=wanted_heads).rev().find(|&h| hidden.is_multiple_of(h)).unwrap_or(1);
        Self {
            variant: Variant::Bert,
            num_layers: (self.num_layers / 4).max(1),
            hidden,
            num_heads,
            ffn_dim: (self.ffn_dim / 4).max(1),
            embed_dim: self.embed_dim.min(hidden),
            mixing: Mixing::SelfAttention,
            share_layer_params: false,
            ..self.clone()
        }
    }
}
