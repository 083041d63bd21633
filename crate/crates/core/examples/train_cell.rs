//! Fine-tunes one variant/activation cell on a synthetic corpus and prints
//! its learning curve and abstention summary.
//!
//!     cargo run --release --example train_cell -- roberta silu 20

use verdict_bench::activations::ActivationKind;
use verdict_bench::data::{build_vocab, split_80_20, synth_corpus};
use verdict_bench::model::{build_model, EncoderConfig, Variant};
use verdict_bench::rng;
use verdict_bench::train::{train, EncodedSet, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let variant: Variant = args.first().map_or("bert", String::as_str).parse().unwrap();
    let activation: ActivationKind = args.get(1).map_or("gelu", String::as_str).parse().unwrap();
    let epochs: usize = args.get(2).map_or(15, |s| s.parse().unwrap());

    let records = synth_corpus(120, 7);
    let (train_recs, val_recs) = split_80_20(&records, 7).unwrap();
    let vocab = build_vocab(&train_recs, 5000).unwrap();
    let seed = rng::mix_labels(7, &[variant.name(), activation.name()]);

    let mut encoder = EncoderConfig::desk(variant, vocab.len());
    encoder.activation = activation;
    let model = build_model(&encoder, seed).unwrap();
    let config = TrainConfig {
        epochs,
        ..TrainConfig::new(activation, seed)
    };
    let train_set = EncodedSet::from_records(&train_recs, &vocab, config.max_len);
    let val_set = EncodedSet::from_records(&val_recs, &vocab, config.max_len);
    println!(
        "{variant}/{activation}: {} parameters, attention dropout {}",
        model.num_parameters(),
        config.attention_dropout
    );

    let (_, report) = train(model, train_set, val_set, config).unwrap();
    println!("{:>5} {:>10} {:>10} {:>8}", "epoch", "train", "val", "acc");
    for e in &report.epochs {
        println!("{:>5} {:>10.4} {:>10.4} {:>8.3}", e.epoch, e.train_loss, e.val_loss, e.val_accuracy);
    }
    println!(
        "best epoch {}; {} of {} validation records abstained at tau {}",
        report.best_epoch,
        report.abstentions,
        val_recs.len(),
        report.abstain_threshold
    );
}
