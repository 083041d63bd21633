use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use verdict_bench::bench::{
    inspect_corpus, plot_report, predict_file, run_gradcheck, run_matrix, synth_to_csv, write_outputs, BenchError,
    BenchSpec, GradcheckOptions, ModelArtifact,
};

#[derive(Parser)]
#[command(name = "bench", version, about = "Encoder variant x activation benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the matrix described by a TOML spec file.
    Run { spec: PathBuf },
    /// Render SVG curves from a report.json.
    Plot { report: PathBuf, out_dir: PathBuf },
    /// Finite-difference check of every op, activation and tiny encoder.
    Gradcheck,
    /// Corpus utilities.
    Data {
        #[command(subcommand)]
        command: DataCommand,
    },
    /// Verdicts for every row of a CSV from a saved model.
    Predict {
        model: PathBuf,
        csv: PathBuf,
        #[arg(long)]
        tau: Option<f64>,
    },
}

#[derive(Subcommand)]
enum DataCommand {
    /// Write a synthetic corpus in the ingest schema.
    Synth { n: usize, seed: u64, out: PathBuf },
    /// Record count, label balance and token lengths.
    Inspect { path: PathBuf },
}

fn run(spec_path: PathBuf) -> Result<ExitCode, BenchError> {
    let spec = BenchSpec::load(&spec_path)?;
    let outcome = run_matrix(&spec)?;
    write_outputs(&spec, &outcome)?;
    print!("{}", outcome.report.to_markdown());
    println!("\nreports written to {}", spec.out_dir.display());
    let failed = outcome.report.failures().count();
    if failed > 0 {
        eprintln!("{failed} cell(s) failed");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn execute(cli: Cli) -> Result<ExitCode, BenchError> {
    match cli.command {
        Command::Run { spec } => run(spec),
        Command::Plot { report, out_dir } => {
            for p in plot_report(&report, &out_dir)? {
                println!("{}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Gradcheck => {
            let report = run_gradcheck(&GradcheckOptions::default());
            print!("{}", report.summary());
            Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Data { command } => {
            match command {
                DataCommand::Synth { n, seed, out } => {
                    synth_to_csv(n, seed, &out)?;
                    println!("wrote {n} records to {}", out.display());
                }
                DataCommand::Inspect { path } => print!("{}", inspect_corpus(&path)?),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Predict { model, csv, tau } => {
            if let Some(t) = tau {
                if !(t > 0.5 && t < 1.0) {
                    eprintln!("--tau must lie in (0.5, 1), got {t}");
                    return Ok(ExitCode::from(2));
                }
            }
            let artifact = ModelArtifact::load(&model)?;
            let (rows, summary) = predict_file(&artifact, &csv, tau)?;
            println!("row,title,verdict,confidence,gold");
            for (i, r) in rows.iter().enumerate() {
                let gold = r.gold.map_or(String::new(), |g| g.to_string());
                println!("{},{:?},{},{:.4},{}", i + 1, r.title, r.verdict, r.confidence, gold);
            }
            eprintln!(
                "petitioner {}, respondent {}, ambiguity {}",
                summary.petitioner, summary.respondent, summary.ambiguity
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
