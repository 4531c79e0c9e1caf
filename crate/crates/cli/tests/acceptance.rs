//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Run with `cargo test -p progrnet-cli --test acceptance`.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use progrnet_cli::args::{BenchArgs, CodecArgs, ConvertArgs, InferArgs, InferDelay, InputArgs, OnOff};
use progrnet_cli::commands::bench::{self, CONCURRENT, SERIALIZED, SINGLETON};
use progrnet_cli::commands::{convert, infer, train};
use progrnet_cli::Output;
use progrnet_core::codec::{accumulate_tensor, concatenate, divide, divide_all};
use progrnet_core::nn::forward_output;
use progrnet_core::{
    dequantize, forward, quantize, quantize_roundtrip, train_demo, BitSchedule, Bundle, DemoModel, QuantizedTensor,
    ReconstructionState, Tensor, TrainConfig, WeightSet,
};
use progrnet_server::{serve, BundleFiles, RequestLog, ThrottleConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

const SEED: u64 = 7;

struct Toy {
    dir: tempfile::TempDir,
    demo: DemoModel,
    bundle: Bundle,
    bundle_dir: PathBuf,
    dataset: PathBuf,
    weights: PathBuf,
}

fn main() -> ExitCode {
    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
    let mut toy: Option<Toy> = None;
    let mut failures = 0;
    let started = Instant::now();

    let mut report = |n: u32, name: &str, outcome: Outcome| match &outcome {
        Ok(detail) => println!("PASS [{n}] {name}: {detail}"),
        Err(reason) => {
            failures += 1;
            println!("FAIL [{n}] {name}: {reason}")
        }
    };

    report(1, "lossless codec round-trip", codec_roundtrip());
    report(2, "quantization error bounds", quantization_bounds());

    match build_toy() {
        Ok(t) => toy = Some(t),
        Err(e) => println!("toy model setup failed: {e}"),
    }
    let missing = || Err("toy model unavailable".to_string());
    let t = toy.as_ref();
    report(3, "size preservation", t.map_or_else(missing, size_preservation));
    report(4, "final-accuracy equivalence", t.map_or_else(missing, final_accuracy));
    report(
        5,
        "concurrent pipeline timing",
        t.map_or_else(missing, |t| runtime.block_on(pipeline_timing(t))),
    );
    report(
        6,
        "stop semantics",
        t.map_or_else(missing, |t| runtime.block_on(stop_semantics(t))),
    );
    report(7, "codec transparency", t.map_or_else(missing, codec_transparency));

    println!(
        "acceptance: {} of 7 criteria passed in {:.1} s",
        7 - failures,
        started.elapsed().as_secs_f64()
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Widths cycling 1, 3, 2 up to k.
fn irregular(k: u32) -> BitSchedule {
    let mut cumulative = Vec::new();
    let mut b = 0;
    for w in [1, 3, 2].into_iter().cycle() {
        b += w;
        if b >= k {
            break;
        }
        cumulative.push(b);
    }
    cumulative.push(k);
    BitSchedule::new(k, cumulative).unwrap()
}

fn schedules(k: u32) -> Vec<BitSchedule> {
    let mut out = vec![
        BitSchedule::new(k, vec![k]).unwrap(),
        BitSchedule::bitwise(k).unwrap(),
        irregular(k),
    ];
    if k >= 2 {
        out.push(BitSchedule::uniform(k, 2).unwrap());
    }
    out
}

fn roundtrip(code: u32, sched: &BitSchedule) -> Result<u32, String> {
    let fragments: Vec<u32> = (1..=sched.stages())
        .map(|m| divide(code, sched, m))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    concatenate(&fragments, sched).map_err(|e| e.to_string())
}

fn codec_roundtrip() -> Outcome {
    let mut checked = 0u64;
    for k in 1..=12u32 {
        for sched in schedules(k) {
            for code in 0..(1u32 << k) {
                let back = roundtrip(code, &sched)?;
                check(back == code, || {
                    format!("k={k} schedule {:?}: {code} came back as {back}", sched.cumulative())
                })?;
                checked += 1;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let scheds = schedules(16);
    let samples = 1_000_000;
    for i in 0..samples {
        let code: u32 = rng.random_range(0..1 << 16);
        let sched = &scheds[i % scheds.len()];
        let back = roundtrip(code, sched)?;
        check(back == code, || {
            format!("k=16 schedule {:?}: {code} came back as {back}", sched.cumulative())
        })?;
    }
    Ok(format!(
        "{checked} exhaustive cases for k<=12 and {samples} random 16-bit codes, 0 failures"
    ))
}

fn quantization_bounds() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let sched = BitSchedule::default_16();
    let mut worst = 0.0f64;
    let mut elements = 0usize;
    for i in 0..100 {
        let len = 10f64.powf(rng.random_range(1.0..=5.0)).round() as usize;
        let range = 10f64.powf(rng.random_range(-3.0..=3.0));
        let lo = -range * rng.random_range(0.0..=1.0);
        let data: Vec<f32> = (0..len).map(|_| (lo + range * rng.random::<f64>()) as f32).collect();
        let t = Tensor::new(vec![len], data).unwrap();
        let q = quantize(&t, 16).map_err(|e| e.to_string())?;
        let span = f64::from(q.max_val()) - f64::from(q.min_val());
        for &b in sched.cumulative() {
            let bound = span / 2f64.powi(b as i32) + span * 2f64.powi(-20);
            let partial = q.truncated(b).map_err(|e| e.to_string())?;
            for (label, codes) in [("full codes", &q), ("received prefix", &partial)] {
                let back = dequantize(codes, b).map_err(|e| e.to_string())?;
                for (x, y) in t.data().iter().zip(back.data()) {
                    let err = (f64::from(*x) - f64::from(*y)).abs();
                    worst = worst.max(err / bound);
                    check(err <= bound * (1.0 + 1e-6), || {
                        format!("tensor {i} ({len} values, range {range:.3e}) B={b} {label}: error {err:.3e} > bound {bound:.3e}")
                    })?;
                }
            }
        }
        elements += len;
    }
    Ok(format!(
        "100 tensors, {elements} values, 8 bit widths; worst error is {:.4} of the bound",
        worst
    ))
}

fn sink() -> Vec<u8> {
    Vec::new()
}

fn build_toy() -> Result<Toy, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let demo = train_demo(SEED, &TrainConfig::default()).map_err(|e| e.to_string())?;
    let demo_dir = dir.path().join("demo");
    let [model, weights, dataset] = train::write_demo(&demo, &demo_dir).map_err(|e| e.to_string())?;
    let bundle_dir = dir.path().join("bundle");
    let args = ConvertArgs {
        model,
        weights: weights.clone(),
        codec: CodecArgs {
            bits: 16,
            schedule: None,
        },
        output: bundle_dir.clone(),
    };
    let mut buf = sink();
    let (bundle, _) = convert::run(&args, &mut Output::new(false, &mut buf)).map_err(|e| e.to_string())?;
    Ok(Toy {
        dir,
        demo,
        bundle,
        bundle_dir,
        dataset,
        weights,
    })
}

fn size_preservation(t: &Toy) -> Outcome {
    let r = convert::report(&t.bundle);
    // independent count straight from the weights
    let baseline: u64 = t
        .demo
        .weights
        .iter()
        .map(|(_, w)| (w.numel() as u64 * 16).div_ceil(8))
        .sum();
    check(baseline == r.baseline_bytes, || {
        format!("baseline {baseline} disagrees with report {}", r.baseline_bytes)
    })?;
    let on_disk: u64 = (1..=t.bundle.manifest.stage_count())
        .map(|m| std::fs::metadata(t.bundle_dir.join(progrnet_core::bundle::stage_file_name(m))).map(|md| md.len()))
        .sum::<Result<u64, _>>()
        .map_err(|e| e.to_string())?;
    check(on_disk == r.payload_bytes, || {
        format!("stage files hold {on_disk} bytes, manifest says {}", r.payload_bytes)
    })?;
    let limit = baseline as f64 * 1.01;
    check(on_disk as f64 <= limit, || {
        format!("{on_disk} payload bytes exceed 1.01 x {baseline}")
    })?;
    Ok(format!(
        "{} stages, {on_disk} payload bytes vs {baseline} at 16 bits ({:+.3}%)",
        r.stages, r.overhead_pct
    ))
}

fn final_accuracy(t: &Toy) -> Outcome {
    let trained = t.demo.test_accuracy;
    check(trained >= 0.95, || format!("trained accuracy {trained:.4} < 0.95"))?;
    let table =
        progrnet_core::accuracy_by_stage(&t.bundle, &t.demo.test, Some(&t.demo.weights)).map_err(|e| e.to_string())?;
    let acc16 = table.at_bits(16).ok_or("no 16-bit stage")?;
    let acc2 = table.at_bits(2).ok_or("no 2-bit stage")?;
    let single = table.singleton.ok_or("no singleton accuracy")?;
    let original = table.original.ok_or("no original accuracy")?;
    check(acc16 == single, || format!("stage-16 {acc16} != singleton {single}"))?;
    check((acc16 - original).abs() <= 0.005, || {
        format!("stage-16 {acc16:.4} is more than 0.5 pp from original {original:.4}")
    })?;
    check(acc2 <= acc16, || format!("2-bit {acc2:.4} > 16-bit {acc16:.4}"))?;
    Ok(format!(
        "trained {trained:.4}; 2-bit {acc2:.4}, 16-bit {acc16:.4}, singleton {single:.4}, original {original:.4}"
    ))
}

async fn pipeline_timing(t: &Toy) -> Outcome {
    let csv = t.dir.path().join("stage_accuracy.csv");
    let args = BenchArgs {
        bundle: t.bundle_dir.clone(),
        dataset: t.dataset.clone(),
        weights: Some(t.weights.clone()),
        index: 0,
        rate: 1_000_000,
        tick_ms: 1,
        port: 0,
        infer_delay: InferDelay::Fraction(0.25),
        runs: 3,
        csv,
    };
    let mut buf = sink();
    let report = bench::run(&args, &mut Output::new(false, &mut buf))
        .await
        .map_err(|e| e.to_string())?;
    let total = |mode| report.row(mode).map(|r| r.total_ms).ok_or(format!("no {mode} row"));
    let (single, conc, serial) = (total(SINGLETON)?, total(CONCURRENT)?, total(SERIALIZED)?);
    let summary = format!(
        "delay {:.1} ms; singleton {single:.1} ms, concurrent {conc:.1} ms ({:.3}x), serialized {serial:.1} ms ({:.3}x)",
        report.infer_delay_ms,
        conc / single,
        serial / single
    );
    check(conc <= 1.05 * single, || format!("concurrent too slow: {summary}"))?;
    check(serial >= 1.10 * single, || format!("serialized too fast: {summary}"))?;
    Ok(summary)
}

async fn stop_semantics(t: &Toy) -> Outcome {
    let files = BundleFiles::from_dir(&t.bundle_dir).map_err(|e| e.to_string())?;
    let log = RequestLog::new();
    let throttle = ThrottleConfig::new(4_000_000, Duration::from_millis(1));
    let server = serve(files, "127.0.0.1:0".parse().unwrap(), throttle, log.clone())
        .await
        .map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    let result = async {
        for (m, concurrent) in [(1, OnOff::On), (3, OnOff::On), (3, OnOff::Off), (6, OnOff::On)] {
            log.clear();
            let args = InferArgs {
                url: server.url(),
                input: InputArgs {
                    dataset: Some(t.dataset.clone()),
                    index: 5,
                    input: None,
                },
                concurrent,
                stop_after: Some(m),
                retries: 0,
                infer_delay_ms: 5,
            };
            let mut buf = sink();
            let (results, _) = infer::run(&args, &mut Output::new(false, &mut buf))
                .await
                .map_err(|e| e.to_string())?;
            let last = results.last().map(|r| r.stage);
            check(last == Some(m as usize), || {
                format!("stop after {m}: last result {last:?}")
            })?;
            // give any stray request time to reach the log
            tokio::time::sleep(Duration::from_millis(200)).await;
            let requested = log.stage_requests();
            check(requested.iter().all(|&j| j as u64 <= m), || {
                format!("stop after {m}: server saw stage requests {requested:?}")
            })?;
            runs.push(format!("m={m} -> {requested:?}"));
        }
        Ok::<_, String>(())
    }
    .await;
    server.shutdown().await;
    result?;
    Ok(format!("no /stage/{{j>m}} requests ({})", runs.join(", ")))
}

/// Full concatenation of divided codes, written out independently of the
/// bundle packer.
fn via_fragments(weights: &WeightSet, names: &[String], sched: &BitSchedule) -> Result<WeightSet, String> {
    let mut out = WeightSet::new();
    for name in names {
        let t = weights.get(name).ok_or("missing tensor")?;
        let q = quantize(t, 16).map_err(|e| e.to_string())?;
        let planes = divide_all(q.codes(), sched).map_err(|e| e.to_string())?;
        let mut codes = vec![0u16; q.codes().len()];
        for p in &planes {
            accumulate_tensor(&mut codes, p, sched).map_err(|e| e.to_string())?;
        }
        let rebuilt = QuantizedTensor::from_parts(t.shape().to_vec(), 16, q.min_val(), q.max_val(), codes)
            .map_err(|e| e.to_string())?;
        out.insert(name.clone(), dequantize(&rebuilt, 16).map_err(|e| e.to_string())?);
    }
    Ok(out)
}

fn codec_transparency(t: &Toy) -> Outcome {
    let spec = &t.demo.spec;
    let names: Vec<String> = spec.required_tensors().into_iter().map(|(n, _)| n).collect();
    let direct = quantize_roundtrip(&t.demo.weights, 16).map_err(|e| e.to_string())?;
    let fragments = via_fragments(&t.demo.weights, &names, &BitSchedule::default_16())?;

    let mut state =
        ReconstructionState::new(std::sync::Arc::new(t.bundle.manifest.clone())).map_err(|e| e.to_string())?;
    for blob in &t.bundle.stages {
        state.apply_blob(blob).map_err(|e| e.to_string())?;
    }
    let bundled = state.materialize().map_err(|e| e.to_string())?;

    for name in &names {
        let a = direct.get(name).unwrap().data();
        for (label, other) in [("fragments", &fragments), ("bundle", &bundled)] {
            let b = other.get(name).unwrap().data();
            check(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()), || {
                format!("{name}: {label} weights differ from quantize/dequantize")
            })?;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let dims = spec.input_shape.iter().product();
    for i in 0..50 {
        let x = Tensor::new(
            spec.input_shape.clone(),
            (0..dims).map(|_| rng.random_range(-3.0f32..3.0)).collect(),
        )
        .unwrap();
        let expected = forward_output(spec, &direct, &x).map_err(|e| e.to_string())?;
        for (label, w) in [("fragments", &fragments), ("bundle", &bundled)] {
            let got = forward_output(spec, w, &x).map_err(|e| e.to_string())?;
            let same = got.shape() == expected.shape()
                && got
                    .data()
                    .iter()
                    .zip(expected.data())
                    .all(|(a, b)| a.to_bits() == b.to_bits());
            check(same, || format!("input {i}: {label} output differs"))?;
            let (p, q) = (forward(spec, w, &x), forward(spec, &direct, &x));
            check(p.map_err(|e| e.to_string())? == q.map_err(|e| e.to_string())?, || {
                format!("input {i}: {label} prediction differs")
            })?;
        }
    }
    Ok(format!(
        "{} tensors bit-identical; 50 random inputs give identical outputs and predictions",
        names.len()
    ))
}
