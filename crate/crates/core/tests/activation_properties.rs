use proptest::prelude::*;
use verdict_bench::activations::{activate, activate_grad, derivative, value, ActivationKind};
use verdict_bench::tensor::Tensor;

/// erf by its Maclaurin series, summed until terms vanish.
fn erf_series(x: f64) -> f64 {
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    while term.abs() > 1e-17 {
        n += 1.0;
        term *= -x * x / n;
        sum += term / (2.0 * n + 1.0);
    }
    2.0 / std::f64::consts::PI.sqrt() * sum
}

#[test]
fn oracle_values_at_one() {
    let gelu_1 = 0.5 * (1.0 + erf_series(1.0 / 2f64.sqrt()));
    let silu_1 = 1.0 / (1.0 + (-1f64).exp());
    assert!((gelu_1 - 0.841345).abs() < 5e-7);
    assert!((silu_1 - 0.731059).abs() < 5e-7);
    assert!((value(ActivationKind::Gelu, 1.0) - gelu_1).abs() < 1e-12);
    assert!((value(ActivationKind::Silu, 1.0) - silu_1).abs() < 1e-12);
    assert_eq!(value(ActivationKind::Relu, -2.0), 0.0);
    assert_eq!(derivative(ActivationKind::Relu, 0.0), 0.0);
}

#[test]
fn gelu_matches_series_across_range() {
    // the alternating series loses digits to cancellation beyond |x| ≈ 3
    for i in 0..=60 {
        let x = -3.0 + 0.1 * i as f64;
        let oracle = 0.5 * x * (1.0 + erf_series(x / 2f64.sqrt()));
        assert!((value(ActivationKind::Gelu, x) - oracle).abs() < 1e-12, "x = {x}");
    }
}

#[test]
fn gelu_new_band() {
    let worst = (0..=12_000)
        .map(|i| -6.0 + i as f64 * 1e-3)
        .map(|x| (value(ActivationKind::Gelu, x) - value(ActivationKind::GeluNew, x)).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-3, "{worst}");
}

#[test]
fn silu_tends_to_identity() {
    assert!((value(ActivationKind::Silu, 20.0) - 20.0).abs() < 1e-6);
}

fn kind() -> impl Strategy<Value = ActivationKind> {
    prop::sample::select(ActivationKind::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn derivative_matches_finite_difference(k in kind(), x in -8.0f64..8.0) {
        prop_assume!(k != ActivationKind::Relu || x.abs() > 1e-4);
        let h = 1e-5;
        let fd = (value(k, x + h) - value(k, x - h)) / (2.0 * h);
        prop_assert!((derivative(k, x) - fd).abs() < 1e-6, "{k} at {x}");
    }

    #[test]
    fn shape_bounds(x in -30.0f64..30.0) {
        prop_assert!(value(ActivationKind::Relu, x) <= x.abs());
        if x != 0.0 {
            let s = value(ActivationKind::Silu, x);
            prop_assert!(s > x.min(0.0) && s < x.max(0.0) || x > 0.0 && s == x, "silu({x}) = {s}");
        }
    }

    #[test]
    fn tensor_forms_agree_elementwise(k in kind(), xs in prop::collection::vec(-5.0f64..5.0, 1..20)) {
        let t = Tensor::new(&[xs.len()], xs.clone()).unwrap();
        let (a, g) = (activate(k, &t), activate_grad(k, &t));
        for (i, &x) in xs.iter().enumerate() {
            prop_assert_eq!(a.data()[i], value(k, x));
            prop_assert_eq!(g.data()[i], derivative(k, x));
        }
    }
}

#[test]
fn zero_is_fixed() {
    for k in ActivationKind::ALL {
        assert_eq!(value(k, 0.0), 0.0);
    }
}
