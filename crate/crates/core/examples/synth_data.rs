//! Generates a synthetic judgment corpus, round-trips it through CSV and
//! shows the split, vocabulary and an encoded record.

use verdict_bench::bench::{inspect_corpus, synth_to_csv};
use verdict_bench::data::{build_vocab, encode, ingest_csv, split_80_20, Label};

fn main() {
    let path = std::env::temp_dir().join("verdict-bench-synth.csv");
    synth_to_csv(200, 7, &path).unwrap();
    println!("{}", inspect_corpus(&path).unwrap());

    let records = ingest_csv(&path).unwrap();
    let (train, validation) = split_80_20(&records, 7).unwrap();
    let petitioners = |rs: &[verdict_bench::data::JudgmentRecord]| rs.iter().filter(|r| r.judgment == Label::Petitioner).count();
    println!(
        "split: train {} ({} petitioner), validation {} ({} petitioner)",
        train.len(),
        petitioners(&train),
        validation.len(),
        petitioners(&validation)
    );

    let vocab = build_vocab(&train, 5000).unwrap();
    println!("vocabulary: {} tokens", vocab.len());
    let first = &train[0];
    let e = encode(&vocab, &first.context, None, 32);
    println!("{} [{}]", first.title, first.judgment);
    println!("  ids   {:?}", e.ids);
    println!("  text  {}", vocab.decode(&e.ids).join(" "));
}
