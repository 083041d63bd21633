//! Acceptance criteria. Each test prints one `[PASS]`/`[FAIL]` line; the
//! tests share a lock so timing-sensitive criteria run alone.

use std::collections::HashSet;
use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use verdict_bench::activations::ActivationKind;
use verdict_bench::bench::{
    parse_markdown, run_gradcheck, run_matrix, write_outputs, BenchSpec, GradcheckOptions, RunOutcome,
};
use verdict_bench::data::{build_vocab, encode_ids, split_80_20, synth_corpus, Encoded, Label, TokenBatch, NUM_SPECIAL};
use verdict_bench::model::{build_model, count_parameters, EncoderConfig, Hidden, Pass, Variant};
use verdict_bench::objectives::{
    make_nsp_pairs, make_sop_pairs, mask_mlm, plm_mask, rtd_corrupt, PairLabel, RtdLabel,
};
use verdict_bench::rng;
use verdict_bench::tensor::{dft2_real_with, DftStrategy, Tensor};
use verdict_bench::train::{adam_update, AdamConfig, EncodedSet, TrainConfig, Trainer};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

/// Prints the criterion line and fails the test with the same message.
fn verdict(id: u8, name: &str, result: Result<String, String>) {
    match result {
        Ok(detail) => println!("[PASS] criterion {id} {name}: {detail}"),
        Err(detail) => {
            println!("[FAIL] criterion {id} {name}: {detail}");
            panic!("criterion {id} failed: {detail}");
        }
    }
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// 1 ---------------------------------------------------------------------

const GRAD_TOL: f64 = 1e-4;
const GRADCHECK_BUDGET: Duration = Duration::from_secs(300);

#[test]
fn criterion_1_gradient_fidelity() {
    let _g = serial();
    let start = Instant::now();
    let opts = GradcheckOptions {
        tolerance: GRAD_TOL,
        ..GradcheckOptions::default()
    };
    let report = run_gradcheck(&opts);
    let elapsed = start.elapsed();
    let result = (|| {
        let encoders: HashSet<&str> = report
            .items
            .iter()
            .filter(|i| i.group == "encoder")
            .map(|i| i.name.as_str())
            .collect();
        check(encoders.len() == 24, || format!("{} encoder combinations", encoders.len()))?;
        let activations = report.items.iter().filter(|i| i.group == "activation").count();
        check(activations == 4, || format!("{activations} activation items"))?;
        let failed: Vec<String> = report.failures().map(|i| i.name.clone()).collect();
        check(failed.is_empty(), || format!("failed items {failed:?}"))?;
        check(elapsed < GRADCHECK_BUDGET, || format!("took {elapsed:?}"))?;
        let worst = report.items.iter().map(|i| i.max_rel_error).fold(0.0, f64::max);
        Ok(format!(
            "{} items, worst rel err {worst:.2e} < {GRAD_TOL:e}, {:.1}s",
            report.items.len(),
            elapsed.as_secs_f64()
        ))
    })();
    verdict(1, "gradient fidelity", result);
}

// 2 ---------------------------------------------------------------------

#[test]
fn criterion_2_parameter_counts() {
    let _g = serial();
    let result = (|| {
        let base = count_parameters(&EncoderConfig::bert_base());
        let large = count_parameters(&EncoderConfig::bert_large());
        let albert = count_parameters(&EncoderConfig::albert_base());
        check((104_500_000..=115_500_000).contains(&base), || format!("bert-base {base}"))?;
        check((323_000_000..=357_000_000).contains(&large), || format!("bert-large {large}"))?;
        check((10_200_000..=13_800_000).contains(&albert), || format!("albert {albert}"))?;
        let mut r = rng::stream(2, &[]);
        use rand::Rng;
        for k in 0..50 {
            let variant = Variant::ALL[r.random_range(0..6)];
            let heads = r.random_range(1..5);
            let mut c = EncoderConfig::desk(variant, r.random_range(6..300));
            c.activation = ActivationKind::ALL[r.random_range(0..4)];
            c.num_layers = r.random_range(1..5);
            c.num_heads = heads;
            c.hidden = heads * r.random_range(1..9) * 2;
            c.ffn_dim = r.random_range(1..80);
            c.embed_dim = if r.random_bool(0.5) { c.hidden } else { r.random_range(1..=c.hidden) };
            c.max_positions = r.random_range(1..80);
            let c = c.with_variant_rules();
            c.validate().map_err(|e| format!("config {k}: {e}"))?;
            let enumerated = build_model(&c, k).unwrap().store().flat().len();
            check(count_parameters(&c) == enumerated, || {
                format!("config {k}: closed form {} vs enumerated {enumerated}", count_parameters(&c))
            })?;
        }
        Ok(format!("bert-base {base}, bert-large {large}, albert {albert}; 50 random configs exact"))
    })();
    verdict(2, "parameter counts", result);
}

// 3 ---------------------------------------------------------------------

fn random_batch(r: &mut rng::StreamRng, rows: usize, vocab: usize) -> TokenBatch {
    use rand::Rng;
    let enc: Vec<Encoded> = (0..rows)
        .map(|_| {
            let n = r.random_range(1..30);
            let ids = (0..n).map(|_| r.random_range(NUM_SPECIAL..vocab)).collect();
            encode_ids(ids, None, 32)
        })
        .collect();
    let refs: Vec<&Encoded> = enc.iter().collect();
    TokenBatch::new(&refs, vec![0; rows])
}

#[test]
fn criterion_3_objective_statistics() {
    let _g = serial();
    let result = (|| {
        let mut r = rng::stream(3, &[]);
        // mask rate over at least 10,000 eligible tokens
        let (mut eligible, mut masked, mut seed) = (0usize, 0usize, 0u64);
        while eligible < 10_000 {
            let b = random_batch(&mut r, 8, 200);
            let s = mask_mlm(&b, 0.15, false, 0, seed).map_err(|e| e.to_string())?;
            eligible += b.ids.iter().flatten().filter(|&&id| id >= NUM_SPECIAL).count();
            masked += s.positions.len();
            seed += 1;
        }
        let rate = masked as f64 / eligible as f64;
        check((0.14..=0.16).contains(&rate), || format!("mask rate {rate}"))?;

        // pair balance on even counts
        let docs: Vec<Vec<String>> = (0..10)
            .map(|d| (0..(2 + d % 4)).map(|i| format!("doc {d} sentence {i}.")).collect())
            .collect();
        for seed in 0..50 {
            let nsp = make_nsp_pairs(&docs, seed).map_err(|e| e.to_string())?;
            let sop = make_sop_pairs(&docs, seed).map_err(|e| e.to_string())?;
            for (pairs, neg) in [(&nsp, PairLabel::NotNext), (&sop, PairLabel::Swapped)] {
                let n = pairs.len() - pairs.len() % 2;
                let negatives = pairs[..n].iter().filter(|p| p.label == neg).count();
                check(negatives * 2 == n, || format!("{negatives} of {n} negatives"))?;
            }
        }

        // PLM strict orders
        for k in 0..1000u64 {
            use rand::Rng;
            let len = r.random_range(1..40);
            let seq = len + r.random_range(0..5);
            let pad: Vec<bool> = (0..seq).map(|i| i < len).collect();
            let m = plm_mask(seq, &pad, k);
            let mut order = m.order.clone();
            order.sort_unstable();
            check(order == (0..len).collect::<Vec<_>>(), || format!("order {k} not a permutation"))?;
            for i in 0..seq {
                for j in 0..seq {
                    let expect = i < len && j < len && m.rank(j) < m.rank(i);
                    check(m.attends(i, j) == expect, || format!("mask {k} at ({i},{j})"))?;
                }
            }
        }

        // RTD labels
        for k in 0..1000u64 {
            use rand::Rng;
            let b = random_batch(&mut r, 4, 30);
            let s = mask_mlm(&b, 0.3, true, k, 7).map_err(|e| e.to_string())?;
            let preds: Vec<usize> = s
                .original_ids
                .iter()
                .map(|&o| if r.random_bool(0.5) { o } else { r.random_range(NUM_SPECIAL..30) })
                .collect();
            let rtd = rtd_corrupt(&b, &s.positions, &preds).map_err(|e| e.to_string())?;
            let masked: HashSet<(usize, usize)> = s.positions.iter().copied().collect();
            for (row, labels) in rtd.labels.iter().enumerate() {
                for (i, &l) in labels.iter().enumerate() {
                    let same = rtd.corrupted_ids[row][i] == b.ids[row][i];
                    check((l == RtdLabel::Original) == same, || format!("batch {k} ({row},{i})"))?;
                    if !masked.contains(&(row, i)) {
                        check(l == RtdLabel::Original, || format!("unmasked replaced in batch {k}"))?;
                    }
                }
            }
        }
        Ok(format!("mask rate {rate:.4} over {eligible} tokens; pairs balanced; 1000 PLM orders; 1000 RTD batches"))
    })();
    verdict(3, "objective statistics", result);
}

// 4 ---------------------------------------------------------------------

/// One packed row of `n` positions through the first layer's mixing
/// sublayer.
fn mixing_sublayer(variant: Variant, n: usize) -> impl FnMut() {
    let mut c = EncoderConfig::desk(variant, 400);
    c.max_positions = 512;
    let model = build_model(&c, 1).unwrap();
    let x = Tensor::randn(&[n, c.hidden], 1.0, &mut rng::stream(n as u64, &[]));
    move || {
        let mut pass = Pass::new(&model);
        let h = Hidden {
            x: pass.tape.constant(x.clone()),
            offsets: vec![0],
            lengths: vec![n],
        };
        std::hint::black_box(pass.mix(&h).unwrap());
    }
}

/// Mean per-call time over a sample of at least 20 ms.
fn per_call(f: &mut impl FnMut()) -> f64 {
    let t = Instant::now();
    let mut calls = 0u32;
    while t.elapsed() < Duration::from_millis(20) {
        f();
        calls += 1;
    }
    t.elapsed().as_secs_f64() / calls as f64
}

/// Median over 11 rounds of attention/fourier time, each round timing the
/// two back to back so both see the same machine load.
fn time_ratio(n: usize) -> f64 {
    let mut attention = mixing_sublayer(Variant::Bert, n);
    let mut fourier = mixing_sublayer(Variant::Fnet, n);
    attention();
    fourier();
    let mut ratios: Vec<f64> = (0..11).map(|_| per_call(&mut attention) / per_call(&mut fourier)).collect();
    ratios.sort_by(f64::total_cmp);
    ratios[ratios.len() / 2]
}

#[test]
fn criterion_4_fourier_layer() {
    let _g = serial();
    let start = Instant::now();
    let result = (|| {
        let mut r = rng::stream(4, &[]);
        let mut worst = 0.0f64;
        for &(n, m) in &[(1, 1), (2, 3), (8, 8), (16, 64), (64, 64), (64, 33), (31, 17), (5, 64)] {
            let x = Tensor::randn(&[n, m], 1.0, &mut r);
            let fast = dft2_real_with(&x, DftStrategy::Auto).unwrap();
            let slow = dft2_real_with(&x, DftStrategy::Naive).unwrap();
            for (a, b) in fast.data().iter().zip(slow.data()) {
                worst = worst.max((a - b).abs());
            }
        }
        check(worst <= 1e-9, || format!("fft vs naive {worst:e}"))?;
        let fnet = build_model(&EncoderConfig::desk(Variant::Fnet, 100), 1).unwrap();
        check(fnet.mixing_parameter_count() == 0, || {
            format!("{} mixing parameters", fnet.mixing_parameter_count())
        })?;
        let ratios: Vec<f64> = [128, 256, 512]
            .iter()
            .map(|&n| time_ratio(n))
            .collect();
        check(ratios[0] < ratios[1] && ratios[1] < ratios[2], || format!("ratios {ratios:?}"))?;
        let elapsed = start.elapsed();
        check(elapsed < Duration::from_secs(120), || format!("took {elapsed:?}"))?;
        Ok(format!(
            "fft-naive {worst:.1e}; 0 mixing params; attention/fourier time {:.2} < {:.2} < {:.2}",
            ratios[0], ratios[1], ratios[2]
        ))
    })();
    verdict(4, "fourier layer", result);
}

// 5 ---------------------------------------------------------------------

#[test]
fn criterion_5_learnability() {
    let _g = serial();
    let start = Instant::now();
    let records = synth_corpus(32, 7);
    let vocab = build_vocab(&records, 5000).unwrap();
    let set = EncodedSet::from_records(&records, &vocab, 128);
    let mut slow = Vec::new();
    let mut worst = 0;
    for v in Variant::ALL {
        for a in ActivationKind::ALL {
            let seed = rng::mix_labels(7, &[v.name(), a.name()]);
            let mut enc = EncoderConfig::desk(v, vocab.len());
            enc.activation = a;
            let config = TrainConfig::new(a, seed);
            let model = build_model(&enc, seed).unwrap();
            let mut trainer = Trainer::new(model, set.clone(), set.clone(), config).unwrap().timed(false);
            let reached = (1..=200).find(|_| {
                trainer.epoch().unwrap();
                trainer.train_accuracy().unwrap() == 1.0
            });
            match reached {
                Some(e) => worst = worst.max(e),
                None => slow.push(format!("{v}/{a}")),
            }
        }
    }
    let elapsed = start.elapsed();
    let result = check(slow.is_empty(), || format!("below 100% after 200 epochs: {slow:?}"))
        .and_then(|_| check(elapsed < Duration::from_secs(1800), || format!("took {elapsed:?}")))
        .map(|_| format!("24/24 cells at 100% train accuracy by epoch {worst}, {:.1}s", elapsed.as_secs_f64()));
    verdict(5, "learnability", result);
}

// 6 and 8 share one default run -------------------------------------------

fn default_run() -> &'static (BenchSpec, RunOutcome, tempfile::TempDir) {
    static RUN: OnceLock<(BenchSpec, RunOutcome, tempfile::TempDir)> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let spec = BenchSpec::from_toml("", dir.path()).unwrap();
        let outcome = run_matrix(&spec).unwrap();
        write_outputs(&spec, &outcome).unwrap();
        (spec, outcome, dir)
    })
}

#[test]
fn criterion_6_protocol_conformance() {
    let _g = serial();
    let (spec, outcome, _) = default_run();
    let result = (|| {
        let report = &outcome.report;
        let d = &report.dataset;
        check((d.records, d.train, d.validation) == (200, 160, 40), || format!("split {d:?}"))?;
        let recs = synth_corpus(spec.data.n, spec.data.seed);
        let (train, val) = split_80_20(&recs, spec.seed).unwrap();
        let p = |rs: &[verdict_bench::data::JudgmentRecord]| rs.iter().filter(|r| r.judgment == Label::Petitioner).count();
        check(p(&train) == 80 && p(&val) == 20, || format!("strata {} / {}", p(&train), p(&val)))?;

        let plans = spec.cells(d.vocab_size).map_err(|e| e.to_string())?;
        for plan in &plans {
            let want = if plan.activation == ActivationKind::Silu { 0.1 } else { 0.3 };
            check(plan.train.attention_dropout == want && plan.encoder.attention_dropout == want, || {
                format!("{}/{} dropout {}", plan.variant, plan.activation, plan.train.attention_dropout)
            })?;
            check(plan.train.epochs == 100, || format!("{} epochs", plan.train.epochs))?;
        }
        for cell in &report.cells {
            let want = if cell.activation == ActivationKind::Silu { 0.1 } else { 0.3 };
            check(cell.attention_dropout == want, || format!("{} ran with {}", cell.label(), cell.attention_dropout))?;
            let epochs = cell.train.as_ref().map_or(0, |t| t.epochs.len());
            check(epochs == 100, || format!("{} ran {epochs} epochs", cell.label()))?;
        }

        let cfg = AdamConfig {
            learning_rate: 0.001,
            ..AdamConfig::default()
        };
        let (mut theta, mut m, mut v) = ([0.0], [0.0], [0.0]);
        adam_update(&mut theta, &mut m, &mut v, &[1.0], 1, &cfg);
        let expected = -0.001 / (1.0 + 1e-8);
        check((theta[0] - expected).abs() < 1e-9, || format!("adam θ = {}", theta[0]))?;

        let md = std::fs::read_to_string(spec.out_dir.join("report.md")).unwrap();
        check(
            md.starts_with("| Model | Training Loss | Validation Loss | Accuracy |"),
            || "markdown header".into(),
        )?;
        let rows = parse_markdown(&md)?;
        check(rows.len() == 24 && report.rows.len() == 24, || format!("{} rows", rows.len()))?;
        check(report.failures().count() == 0, || "failed cells".into())?;
        Ok("200 records split 160/40 stratified; 24 cells x 100 epochs; dropout rule on all configs; adam exact; 24-row table".into())
    })();
    verdict(6, "protocol conformance", result);
}

// 7 ---------------------------------------------------------------------

#[test]
fn criterion_7_determinism() {
    let _g = serial();
    let result = (|| {
        let text = "timing = false\n[data]\nn = 40\nmax_len = 64\n[train]\nepochs = 3\n";
        let mut csv = Vec::new();
        for threads in [1, 4] {
            let dir = tempfile::tempdir().unwrap();
            let mut spec = BenchSpec::from_toml(text, dir.path()).map_err(|e| e.to_string())?;
            spec.parallelism = threads;
            let outcome = run_matrix(&spec).map_err(|e| e.to_string())?;
            write_outputs(&spec, &outcome).map_err(|e| e.to_string())?;
            csv.push(std::fs::read(spec.out_dir.join("report.csv")).unwrap());
        }
        check(csv[0] == csv[1], || "report.csv differs between parallelism 1 and 4".into())?;
        Ok(format!("24-cell report.csv byte-identical at parallelism 1 and 4 ({} bytes)", csv[0].len()))
    })();
    verdict(7, "determinism", result);
}

// 8 ---------------------------------------------------------------------

#[test]
fn criterion_8_end_to_end() {
    let _g = serial();
    let (_, outcome, _) = default_run();
    let report = &outcome.report;
    let best = report
        .cells
        .iter()
        .filter_map(|c| c.train.as_ref().map(|t| (c.label(), t.last().val_accuracy)))
        .fold((String::new(), 0.0), |b, c| if c.1 > b.1 { c } else { b });
    let early: Vec<String> = report
        .cells
        .iter()
        .filter(|c| c.train.as_ref().is_some_and(|t| t.best_epoch < 100))
        .map(|c| c.label())
        .collect();
    let result = check(best.1 >= 0.9, || format!("best held-out accuracy {} ({})", best.1, best.0))
        .and_then(|_| check(!early.is_empty(), || "no cell has best epoch before 100".into()))
        .map(|_| {
            format!(
                "best held-out accuracy {:.3} ({}); {} cells with best-val epoch < 100",
                best.1,
                best.0,
                early.len()
            )
        });
    verdict(8, "end-to-end sanity", result);
}
