use std::collections::HashMap;

use proptest::prelude::*;
use rand::seq::{IndexedRandom, SliceRandom};
use verdict_bench::data::{
    build_vocab, encode, split_80_20, synth_corpus, tokenize, JudgmentRecord, Label, TokenBatch, Vocab, CLS,
    MAX_POSITIONS,
};
use verdict_bench::rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn decode_inverts_encode(n in 1usize..509, seed in any::<u64>()) {
        let words = ["appeal", "allowed", "court", "order", "dismissed", "costs", "the"];
        let mut r = rng::stream(seed, &[]);
        let text: Vec<&str> = (0..n).map(|_| *words.choose(&mut r).unwrap()).collect();
        let text = text.join(" ");
        let vocab = Vocab::from_texts([text.as_str()], 100).unwrap();
        let e = encode(&vocab, &text, None, MAX_POSITIONS);
        prop_assert_eq!(vocab.decode(&e.ids), tokenize(&text));
    }

    #[test]
    fn rows_bounded_with_one_cls(n in 1usize..900, max_len in 3usize..=512) {
        let text = vec!["court"; n].join(" ");
        let vocab = Vocab::from_texts([text.as_str()], 10).unwrap();
        let a = encode(&vocab, &text, None, max_len);
        let b = encode(&vocab, "court", Some(&text), max_len.max(4));
        let batch = TokenBatch::new(&[&a], vec![0]);
        prop_assert!(batch.seq_len() <= 512);
        for ids in [&a.ids, &b.ids] {
            prop_assert!(ids.len() <= 512);
            prop_assert_eq!(ids.iter().filter(|&&i| i == CLS).count(), 1);
        }
    }

    #[test]
    fn split_is_a_partition(n in 5usize..120, data_seed in any::<u64>(), split_seed in any::<u64>()) {
        let recs = synth_corpus(n, data_seed);
        let (train, val) = split_80_20(&recs, split_seed).unwrap();
        prop_assert_eq!(train.len(), (4 * n).div_ceil(5));
        let key = |r: &JudgmentRecord| format!("{}|{}|{}", r.title, r.context, r.judgment);
        let mut counts: HashMap<String, i64> = HashMap::new();
        for r in &recs {
            *counts.entry(key(r)).or_default() += 1;
        }
        for r in train.iter().chain(&val) {
            *counts.entry(key(r)).or_default() -= 1;
        }
        prop_assert!(counts.values().all(|&c| c == 0));
    }

    #[test]
    fn vocab_ignores_record_order(seed in any::<u64>(), max in 6usize..80) {
        let recs = synth_corpus(30, 3);
        let mut shuffled = recs.clone();
        shuffled.shuffle(&mut rng::stream(seed, &[]));
        prop_assert_eq!(build_vocab(&recs, max).unwrap(), build_vocab(&shuffled, max).unwrap());
    }
}

#[test]
fn synthetic_labels_balanced() {
    for n in [1, 2, 31, 200] {
        let recs = synth_corpus(n, 9);
        let p = recs.iter().filter(|r| r.judgment == Label::Petitioner).count();
        assert!(p.abs_diff(n - p) <= 1);
    }
}

/// Multinomial naive Bayes over word counts: if the synthetic task is
/// separable from surface words, this beats 95% on held-out records.
#[test]
fn bag_of_words_oracle_separates_synthetic_corpus() {
    let recs = synth_corpus(1000, 21);
    let (train, val) = split_80_20(&recs, 4).unwrap();
    let mut counts = [HashMap::<String, f64>::new(), HashMap::new()];
    let mut totals = [0.0f64; 2];
    let mut priors = [0.0f64; 2];
    for r in &train {
        let c = r.judgment.index();
        priors[c] += 1.0;
        for t in tokenize(&r.context) {
            *counts[c].entry(t).or_default() += 1.0;
            totals[c] += 1.0;
        }
    }
    let vocab_size = counts[0].keys().chain(counts[1].keys()).collect::<std::collections::HashSet<_>>().len() as f64;
    let correct = val
        .iter()
        .filter(|r| {
            let score = |c: usize| {
                priors[c].ln()
                    + tokenize(&r.context)
                        .iter()
                        .map(|t| ((counts[c].get(t).copied().unwrap_or(0.0) + 1.0) / (totals[c] + vocab_size)).ln())
                        .sum::<f64>()
            };
            let pred = if score(1) > score(0) { 1 } else { 0 };
            pred == r.judgment.index()
        })
        .count();
    let acc = correct as f64 / val.len() as f64;
    assert!(acc > 0.95, "naive Bayes accuracy {acc}");
}
