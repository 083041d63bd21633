use proptest::prelude::*;
use verdict_bench::activations::ActivationKind;
use verdict_bench::data::{encode_ids, Encoded, TokenBatch};
use verdict_bench::model::{build_model, count_parameters, EncoderConfig, Mixing, Variant};
use verdict_bench::rng;

fn config() -> impl Strategy<Value = EncoderConfig> {
    (
        prop::sample::select(Variant::ALL.to_vec()),
        prop::sample::select(ActivationKind::ALL.to_vec()),
        1usize..4,
        1usize..4,
        1usize..9,
        1usize..40,
        6usize..120,
        1usize..48,
        1usize..3,
    )
        .prop_map(|(variant, activation, layers, heads, head_dim, ffn, vocab, positions, segments)| {
            let hidden = heads * head_dim * 2;
            let mut c = EncoderConfig::desk(variant, vocab);
            c.activation = activation;
            c.num_layers = layers;
            c.num_heads = heads;
            c.hidden = hidden;
            c.ffn_dim = ffn;
            c.embed_dim = hidden;
            c.max_positions = positions;
            c.num_segments = segments;
            c.with_variant_rules()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn closed_form_count_matches_enumeration(c in config(), seed in any::<u64>()) {
        prop_assert!(c.validate().is_ok(), "{c:?}");
        let model = build_model(&c, seed).unwrap();
        prop_assert_eq!(count_parameters(&c), model.store().flat().len());
        prop_assert_eq!(model.num_parameters(), model.store().flat().len());
    }

    #[test]
    fn padding_never_changes_logits(c in config(), extra in 1usize..6, seed in any::<u64>()) {
        let mut c = c;
        c.max_positions = 24;
        let model = build_model(&c, seed).unwrap();
        let ids: Vec<usize> = (0..5).map(|i| 5 + (i * 7) % (c.vocab_size - 5)).collect();
        let short = encode_ids(ids.clone(), None, 8);
        let long = encode_ids(ids, None, 8 + extra);
        let a = model.logits(&TokenBatch::new(&[&short], vec![0])).unwrap();
        let b = model.logits(&TokenBatch::new(&[&long], vec![0])).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }
}

#[test]
fn albert_count_is_depth_independent() {
    let mut c = EncoderConfig::albert_base();
    c.num_layers = 2;
    let two = count_parameters(&c);
    c.num_layers = 12;
    assert_eq!(two, count_parameters(&c));
    let mut small = EncoderConfig::desk(Variant::Albert, 300);
    small.num_layers = 2;
    let model_two = build_model(&small, 1).unwrap().num_parameters();
    small.num_layers = 12;
    assert_eq!(model_two, build_model(&small, 1).unwrap().num_parameters());
}

#[test]
fn fourier_mixing_has_no_parameters() {
    for a in ActivationKind::ALL {
        let mut c = EncoderConfig::desk(Variant::Fnet, 200);
        c.activation = a;
        let model = build_model(&c, 3).unwrap();
        assert_eq!(model.config().mixing, Mixing::Fourier);
        assert_eq!(model.mixing_parameter_count(), 0);
        assert!(model.store().names().iter().all(|n| !n.contains("mixing")));
    }
}

/// Rows whose real tokens are all equal stay equal under every layer,
/// since nothing position-dependent is added beyond the embeddings.
#[test]
fn identical_rows_give_identical_logits() {
    for v in Variant::ALL {
        let model = build_model(&EncoderConfig::desk(v, 60), rng::mix(7, &[v as u64])).unwrap();
        let a = encode_ids(vec![9, 12, 30], None, 10);
        let rows: Vec<&Encoded> = vec![&a, &a, &a];
        let logits = model.logits(&TokenBatch::new(&rows, vec![0, 1, 0])).unwrap();
        assert_eq!(logits.row(0), logits.row(1));
        assert_eq!(logits.row(1), logits.row(2));
    }
}
