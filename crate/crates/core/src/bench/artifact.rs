use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::data::Vocab;
use crate::model::{build_model, EncoderConfig, EncoderModel, NamedParam};

/// A fine-tuned model with everything `bench predict` needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelArtifact {
    pub config: EncoderConfig,
    pub max_len: usize,
    pub abstain_threshold: f64,
    pub vocab: Vec<String>,
    pub params: Vec<NamedParam>,
}

impl ModelArtifact {
    pub fn new(model: &EncoderModel, vocab: &Vocab, max_len: usize, abstain_threshold: f64) -> Self {
        Self {
            config: model.config().clone(),
            max_len,
            abstain_threshold,
            vocab: vocab.tokens().to_vec(),
            params: model.store().to_named(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), BenchError> {
        let text = serde_json::to_string(self).map_err(|e| BenchError::Artifact(e.to_string()))?;
        fs::write(path, text).map_err(|e| BenchError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| BenchError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn vocab(&self) -> Result<Vocab, BenchError> {
        let mut text = self.vocab.join("\n");
        text.push('\n');
        Ok(Vocab::from_text(&text)?)
    }

    /// Rebuilds the model and loads the stored weights.
    pub fn model(&self) -> Result<EncoderModel, BenchError> {
        let mut model = build_model(&self.config, 0).map_err(|e| BenchError::Artifact(e.to_string()))?;
        model.store_mut().load_named(&self.params).map_err(BenchError::Artifact)?;
        Ok(model)
    }
}
