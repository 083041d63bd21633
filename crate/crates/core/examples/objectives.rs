//! Pretraining targets on a toy batch: masked tokens, sentence pairs, a
//! permutation mask and replaced-token labels.

use verdict_bench::data::{build_vocab, encode, synth_corpus, TokenBatch};
use verdict_bench::objectives::{make_nsp_pairs, make_sop_pairs, mask_mlm, plm_mask, rtd_corrupt, split_sentences};

fn main() {
    let records = synth_corpus(4, 1);
    let vocab = build_vocab(&records, 500).unwrap();
    let encoded: Vec<_> = records.iter().map(|r| encode(&vocab, &r.context, None, 24)).collect();
    let refs: Vec<_> = encoded.iter().collect();
    let batch = TokenBatch::new(&refs, vec![0; refs.len()]);

    let mlm = mask_mlm(&batch, 0.15, true, 0, 42).unwrap();
    println!("masked {} positions: {:?}", mlm.positions.len(), mlm.positions);
    println!("row 0 input: {}", vocab.decode(&mlm.input_ids[0]).join(" "));

    let docs: Vec<Vec<String>> = records.iter().map(|r| split_sentences(&r.context)).collect();
    for (name, pairs) in [("nsp", make_nsp_pairs(&docs, 3).unwrap()), ("sop", make_sop_pairs(&docs, 3).unwrap())] {
        println!("{name}: {} pairs", pairs.len());
        for p in pairs.iter().take(2) {
            println!("  {:?}: {:?} | {:?}", p.label, p.a, p.b);
        }
    }

    let plm = plm_mask(8, &[true, true, true, true, true, true, false, false], 5);
    println!("plm order {:?}", plm.order);
    for i in 0..8 {
        let row: String = (0..8).map(|j| if plm.attends(i, j) { '1' } else { '.' }).collect();
        println!("  {row}");
    }

    // a "generator" that guesses every other token right
    let guesses: Vec<usize> = mlm
        .original_ids
        .iter()
        .enumerate()
        .map(|(k, &id)| if k % 2 == 0 { id } else { vocab.id("the") })
        .collect();
    let rtd = rtd_corrupt(&batch, &mlm.positions, &guesses).unwrap();
    for &(r, i) in &mlm.positions {
        println!("  ({r},{i}) {:?}", rtd.labels[r][i]);
    }
}
