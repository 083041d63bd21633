//! Finite-difference check of every op, activation and a reduced encoder
//! sweep.
//!
//!     cargo run --release --example gradcheck

use verdict_bench::bench::{run_gradcheck, GradcheckOptions};

fn main() {
    let opts = GradcheckOptions {
        activation_points: 200,
        encoder_coordinates: 200,
        ..GradcheckOptions::default()
    };
    let report = run_gradcheck(&opts);
    for item in &report.items {
        println!(
            "{:<10} {:<22} {:>6} coords  max rel err {:.2e}  {}",
            item.group,
            item.name,
            item.coordinates,
            item.max_rel_error,
            if item.passed { "ok" } else { "FAIL" }
        );
    }
    println!("{}", report.summary());
    if !report.passed() {
        std::process::exit(1);
    }
}
