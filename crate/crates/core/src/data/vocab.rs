use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{DataError, JudgmentRecord};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const CLS: usize = 2;
pub const SEP: usize = 3;
pub const MASK: usize = 4;
pub const NUM_SPECIAL: usize = 5;
pub const SPECIAL_TOKENS: [&str; NUM_SPECIAL] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"];

/// Lowercased word tokens; every punctuation character is its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            word.extend(ch.to_lowercase());
            continue;
        }
        if !word.is_empty() {
            tokens.push(std::mem::take(&mut word));
        }
        if !ch.is_whitespace() {
            tokens.push(ch.to_string());
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

/// Word-level vocabulary. Ids are dense; ids `0..5` are the reserved tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

/// Builds a vocabulary from record contexts: tokens ranked by frequency,
/// then lexicographically, truncated to `max_size` ids including the
/// reserved ones.
pub fn build_vocab(records: &[JudgmentRecord], max_size: usize) -> Result<Vocab, DataError> {
    Vocab::from_texts(records.iter().map(|r| r.context.as_str()), max_size)
}

impl Vocab {
    pub fn from_texts<'a>(
        texts: impl IntoIterator<Item = &'a str>,
        max_size: usize,
    ) -> Result<Self, DataError> {
        if max_size <= NUM_SPECIAL {
            return Err(DataError::VocabTooSmall(max_size));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut any = false;
        for text in texts {
            any = true;
            for tok in tokenize(text) {
                if SPECIAL_TOKENS.contains(&tok.as_str()) {
                    continue;
                }
                *counts.entry(tok).or_default() += 1;
            }
        }
        if !any || counts.is_empty() {
            return Err(DataError::EmptyCorpus);
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let tokens = SPECIAL_TOKENS
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().map(|(t, _)| t))
            .take(max_size)
            .collect();
        Ok(Self::from_tokens(tokens))
    }

    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id of `token`, or [`UNK`] when it is not in the vocabulary.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode_text(&self, text: &str) -> Vec<usize> {
        tokenize(text).iter().map(|t| self.id(t)).collect()
    }

    /// Tokens for ids, skipping padding and the structural specials.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .filter(|&&id| !matches!(id, PAD | CLS | SEP))
            .filter_map(|&id| self.token(id).map(str::to_string))
            .collect()
    }

    /// One token per line; the line number is the id.
    pub fn to_text(&self) -> String {
        let mut out = self.tokens.join("\n");
        out.push('\n');
        out
    }

    pub fn from_text(text: &str) -> Result<Self, DataError> {
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        if tokens.len() < NUM_SPECIAL || tokens[..NUM_SPECIAL] != SPECIAL_TOKENS {
            return Err(DataError::BadVocab("reserved tokens missing from lines 1-5".into()));
        }
        let vocab = Self::from_tokens(tokens);
        if vocab.index.len() != vocab.tokens.len() {
            return Err(DataError::BadVocab("duplicate token".into()));
        }
        Ok(vocab)
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_splits_punctuation() {
        assert_eq!(
            tokenize("The Appeal, is ALLOWED."),
            vec!["the", "appeal", ",", "is", "allowed", "."]
        );
    }

    #[test]
    fn frequency_then_lexicographic() {
        let v = Vocab::from_texts(["a b b"], 8).unwrap();
        assert_eq!(v.id("b"), NUM_SPECIAL);
        assert_eq!(v.id("a"), NUM_SPECIAL + 1);
        let v = Vocab::from_texts(["zeta alpha"], 8).unwrap();
        assert!(v.id("alpha") < v.id("zeta"));
    }

    #[test]
    fn truncation_and_unknowns() {
        let v = Vocab::from_texts(["a a a b b c"], 7).unwrap();
        assert_eq!(v.len(), 7);
        assert_eq!(v.id("c"), UNK);
        assert_eq!(v.id("never-seen"), UNK);
        assert!(Vocab::from_texts(["a"], 5).is_err());
        assert!(matches!(
            Vocab::from_texts(std::iter::empty(), 10),
            Err(DataError::EmptyCorpus)
        ));
    }

    #[test]
    fn text_round_trip() {
        let v = Vocab::from_texts(["the court held the order"], 100).unwrap();
        let back = Vocab::from_text(&v.to_text()).unwrap();
        assert_eq!(v, back);
        for id in 0..v.len() {
            assert_eq!(v.id(v.token(id).unwrap()), id);
        }
        assert!(Vocab::from_text("a\nb\n").is_err());
    }
}
