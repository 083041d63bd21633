//! Trains a small model, stores it as an artifact and labels an unlabelled
//! CSV, abstaining below the confidence threshold.

use std::fs;

use verdict_bench::activations::ActivationKind;
use verdict_bench::bench::{predict_file, ModelArtifact};
use verdict_bench::data::{build_vocab, synth_corpus, write_csv};
use verdict_bench::model::{build_model, EncoderConfig, Variant};
use verdict_bench::train::{train, EncodedSet, TrainConfig};

fn main() {
    let dir = std::env::temp_dir().join("verdict-bench-predict");
    fs::create_dir_all(&dir).unwrap();

    let records = synth_corpus(48, 11);
    let vocab = build_vocab(&records, 2000).unwrap();
    let config = TrainConfig {
        epochs: 12,
        max_len: 64,
        ..TrainConfig::new(ActivationKind::Gelu, 11)
    };
    let set = EncodedSet::from_records(&records, &vocab, config.max_len);
    let model = build_model(&EncoderConfig::desk(Variant::Bert, vocab.len()), 11).unwrap();
    let (model, report) = train(model, set.clone(), set, config.clone()).unwrap();
    println!("trained to validation accuracy {:.3}", report.last().val_accuracy);

    let artifact_path = dir.join("model.json");
    ModelArtifact::new(&model, &vocab, config.max_len, config.abstain_threshold)
        .save(&artifact_path)
        .unwrap();

    let unseen = synth_corpus(10, 99);
    let csv_path = dir.join("unseen.csv");
    write_csv(&unseen, fs::File::create(&csv_path).unwrap()).unwrap();

    let artifact = ModelArtifact::load(&artifact_path).unwrap();
    for tau in [0.6, 0.9] {
        let (rows, summary) = predict_file(&artifact, &csv_path, Some(tau)).unwrap();
        println!("tau {tau}: {summary:?}");
        for row in rows.iter().take(4) {
            println!("  {:<40} {:<11} {:.3} gold {:?}", row.title, row.verdict.name(), row.confidence, row.gold);
        }
    }
}
