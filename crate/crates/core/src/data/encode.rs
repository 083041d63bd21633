use super::vocab::{Vocab, CLS, PAD, SEP};

/// Longest sequence the position table supports.
pub const MAX_POSITIONS: usize = 512;

/// One encoded sequence, padded to its fixed length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoded {
    pub ids: Vec<usize>,
    pub segment_ids: Vec<usize>,
}

impl Encoded {
    /// Number of non-pad positions.
    pub fn length(&self) -> usize {
        self.ids.iter().filter(|&&id| id != PAD).count()
    }
}

/// `[CLS] A… [SEP] (B… [SEP])`, truncated to `max_len` by trimming the
/// tail of the longer segment first, then right-padded with `[PAD]`.
pub fn encode(vocab: &Vocab, text_a: &str, text_b: Option<&str>, max_len: usize) -> Encoded {
    let a = vocab.encode_text(text_a);
    let b = text_b.map(|t| vocab.encode_text(t));
    encode_ids(a, b, max_len)
}

pub fn encode_ids(mut a: Vec<usize>, mut b: Option<Vec<usize>>, max_len: usize) -> Encoded {
    let overhead = if b.is_some() { 3 } else { 2 };
    assert!(max_len > overhead, "max_len {max_len} leaves no room for tokens");
    let budget = max_len - overhead;
    loop {
        let b_len = b.as_ref().map_or(0, Vec::len);
        if a.len() + b_len <= budget {
            break;
        }
        match &mut b {
            Some(bv) if bv.len() >= a.len() => {
                bv.pop();
            }
            _ => {
                a.pop();
            }
        }
    }
    let mut ids = Vec::with_capacity(max_len);
    let mut segment_ids = Vec::with_capacity(max_len);
    ids.push(CLS);
    ids.extend(a);
    ids.push(SEP);
    segment_ids.resize(ids.len(), 0);
    if let Some(bv) = b {
        ids.extend(bv);
        ids.push(SEP);
        segment_ids.resize(ids.len(), 1);
    }
    ids.resize(max_len, PAD);
    segment_ids.resize(max_len, 0);
    Encoded { ids, segment_ids }
}

/// Padded id matrix with segment ids, pad mask and class labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenBatch {
    pub ids: Vec<Vec<usize>>,
    pub segment_ids: Vec<Vec<usize>>,
    /// `true` at real tokens, `false` at padding.
    pub pad_mask: Vec<Vec<bool>>,
    pub labels: Vec<usize>,
}

impl TokenBatch {
    pub fn new(rows: &[&Encoded], labels: Vec<usize>) -> Self {
        assert_eq!(rows.len(), labels.len(), "one label per row");
        Self {
            ids: rows.iter().map(|r| r.ids.clone()).collect(),
            segment_ids: rows.iter().map(|r| r.segment_ids.clone()).collect(),
            pad_mask: rows
                .iter()
                .map(|r| r.ids.iter().map(|&id| id != PAD).collect())
                .collect(),
            labels,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn seq_len(&self) -> usize {
        self.ids.first().map_or(0, Vec::len)
    }

    /// Indices of the non-pad positions of `row`, in order.
    pub fn real_positions(&self, row: usize) -> Vec<usize> {
        self.pad_mask[row]
            .iter()
            .enumerate()
            .filter_map(|(i, &keep)| keep.then_some(i))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::vocab::Vocab;

    fn vocab() -> Vocab {
        Vocab::from_texts(["x y z"], 16).unwrap()
    }

    #[test]
    fn single_segment_layout() {
        let v = vocab();
        let e = encode(&v, "x", None, 6);
        assert_eq!(e.ids, vec![CLS, v.id("x"), SEP, PAD, PAD, PAD]);
        assert_eq!(e.segment_ids, vec![0; 6]);
        assert_eq!(e.length(), 3);
    }

    #[test]
    fn pair_layout() {
        let v = vocab();
        let e = encode(&v, "x", Some("y"), 5);
        assert_eq!(e.ids, vec![CLS, v.id("x"), SEP, v.id("y"), SEP]);
        assert_eq!(e.segment_ids, vec![0, 0, 0, 1, 1]);
    }

    #[test]
    fn longer_segment_trimmed_first() {
        let e = encode_ids(vec![10, 11], Some(vec![20, 21, 22, 23]), 7);
        assert_eq!(e.ids, vec![CLS, 10, 11, SEP, 20, 21, SEP]);
        let e = encode_ids(vec![10, 11, 12, 13, 14], None, 5);
        assert_eq!(e.ids, vec![CLS, 10, 11, 12, SEP]);
    }

    #[test]
    fn long_context_truncates_to_limit() {
        let v = vocab();
        let text = vec!["x"; 600].join(" ");
        let e = encode(&v, &text, None, MAX_POSITIONS);
        assert_eq!(e.ids.len(), 512);
        assert_eq!(e.ids[511], SEP);
        assert_eq!(e.ids.iter().filter(|&&i| i == CLS).count(), 1);
    }

    #[test]
    fn batch_masks_and_positions() {
        let v = vocab();
        let a = encode(&v, "x y", None, 6);
        let b = encode(&v, "z", None, 6);
        let batch = TokenBatch::new(&[&a, &b], vec![0, 1]);
        assert_eq!(batch.pad_mask[1], vec![true, true, true, false, false, false]);
        assert_eq!(batch.real_positions(0), vec![0, 1, 2, 3]);
        assert_eq!(batch.seq_len(), 6);
    }
}
