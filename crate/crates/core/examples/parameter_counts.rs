//! Closed-form parameter counts for the full-size presets and the desk
//! configurations used by the benchmark.

use verdict_bench::model::{build_model, count_parameters, EncoderConfig, Variant};

fn main() {
    for (name, config) in [
        ("bert-base", EncoderConfig::bert_base()),
        ("bert-large", EncoderConfig::bert_large()),
        ("albert-base", EncoderConfig::albert_base()),
    ] {
        println!("{name:<12} {:>12}", count_parameters(&config));
    }
    println!();
    for variant in Variant::ALL {
        let config = EncoderConfig::desk(variant, 2000);
        let model = build_model(&config, 0).expect("desk config is valid");
        println!(
            "desk {:<8} {:>9} params  {:>6} in mixing  embed {:>2}  shared {}",
            variant.name(),
            count_parameters(&config),
            model.mixing_parameter_count(),
            config.embed_dim,
            config.share_layer_params
        );
    }
}
