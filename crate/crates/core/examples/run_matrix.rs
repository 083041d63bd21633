//! A reduced benchmark matrix from an inline spec, printed as a table and
//! written with plots to a temporary directory.

use verdict_bench::bench::{plot_report, run_matrix, write_outputs, BenchSpec};

const SPEC: &str = r#"
seed = 3
variants = ["bert", "albert", "fnet"]
activations = ["gelu", "silu"]
parallelism = 2

[data]
n = 60
max_len = 64

[train]
epochs = 4
"#;

fn main() {
    let dir = std::env::temp_dir().join("verdict-bench-run-matrix");
    let spec = BenchSpec::from_toml(SPEC, &dir).unwrap();
    let outcome = run_matrix(&spec).unwrap();
    let written = write_outputs(&spec, &outcome).unwrap();
    print!("{}", outcome.report.to_markdown());
    let plots = plot_report(&spec.out_dir.join("report.json"), &spec.out_dir.join("plots")).unwrap();
    for path in written.iter().chain(&plots) {
        println!("wrote {}", path.display());
    }
}
