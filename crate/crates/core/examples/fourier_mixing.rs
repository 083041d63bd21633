//! Fourier mixing: FFT against the direct transform, and the time of the
//! attention and Fourier mixing sublayers as the sequence grows.

use std::time::Instant;

use verdict_bench::model::{build_model, EncoderConfig, Hidden, Pass, Variant};
use verdict_bench::rng;
use verdict_bench::tensor::{dft2_real_with, DftStrategy, Tensor};

fn mixing_seconds(variant: Variant, n: usize) -> f64 {
    let mut config = EncoderConfig::desk(variant, 400);
    config.max_positions = 512;
    let model = build_model(&config, 1).unwrap();
    let x = Tensor::randn(&[n, config.hidden], 1.0, &mut rng::stream(1, &[]));
    (0..5)
        .map(|_| {
            let t = Instant::now();
            let mut pass = Pass::new(&model);
            let h = Hidden {
                x: pass.tape.constant(x.clone()),
                offsets: vec![0],
                lengths: vec![n],
            };
            std::hint::black_box(pass.mix(&h).unwrap());
            t.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

fn main() {
    let mut r = rng::stream(0, &[]);
    let x = Tensor::randn(&[48, 64], 1.0, &mut r);
    let fast = dft2_real_with(&x, DftStrategy::Auto).unwrap();
    let slow = dft2_real_with(&x, DftStrategy::Naive).unwrap();
    let diff = fast.data().iter().zip(slow.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("48x64 fft vs direct: max abs diff {diff:.1e}");

    println!("{:>5} {:>12} {:>12} {:>7}", "N", "attention s", "fourier s", "ratio");
    for n in [64, 128, 256, 512] {
        let a = mixing_seconds(Variant::Bert, n);
        let f = mixing_seconds(Variant::Fnet, n);
        println!("{n:>5} {a:>12.5} {f:>12.5} {:>7.2}", a / f);
    }
}
