use std::net::{Ipv4Addr, SocketAddr};
use std::time::Duration;

use progrnet_client::{singleton_session, BundleClient, ProgressiveSession, SessionOptions};
use progrnet_core::{accuracy_by_stage, portable, Bundle, Prediction, StageAccuracyTable};
use progrnet_server::{serve, BundleFiles, RequestLog, ThrottleConfig};
use serde::Serialize;

use crate::args::{BenchArgs, InferDelay};
use crate::commands::read_dataset;
use crate::error::CliError;
use crate::output::Output;

pub const SINGLETON: &str = "singleton";
pub const CONCURRENT: &str = "progressive-concurrent";
pub const SERIALIZED: &str = "progressive-serialized";

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub mode: &'static str,
    /// Median over runs.
    pub total_ms: f64,
    pub totals_ms: Vec<f64>,
    pub vs_singleton: f64,
    /// Time at which each stage's prediction was available, last run.
    pub stage_ms: Vec<f64>,
    pub final_accuracy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub rate: u64,
    pub infer_delay_ms: f64,
    pub payload_bytes: u64,
    pub rows: Vec<BenchRow>,
    pub accuracy: StageAccuracyTable,
}

impl BenchReport {
    pub fn row(&self, mode: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.mode == mode)
    }
}

pub async fn run(args: &BenchArgs, out: &mut Output<'_>) -> Result<BenchReport, CliError> {
    let bundle = Bundle::read_dir(&args.bundle).map_err(|e| CliError::io(args.bundle.display(), e))?;
    let dataset = read_dataset(&args.dataset)?;
    let original = match &args.weights {
        Some(p) => Some(portable::read(p).map_err(|e| CliError::io(p.display(), e))?),
        None => None,
    };
    let input = dataset
        .get(args.index)
        .map(|(x, _)| x.clone())
        .ok_or_else(|| CliError::Usage(format!("--index {} is out of range", args.index)))?;

    let accuracy = accuracy_by_stage(&bundle, &dataset, original.as_ref())?;
    let csv = std::fs::File::create(&args.csv).map_err(|e| CliError::io(args.csv.display(), e))?;
    accuracy
        .write_csv(csv)
        .map_err(|e| CliError::io(args.csv.display(), e))?;
    for s in &accuracy.stages {
        out.event("accuracy", s, || {
            format!("stage {:>2}  bits {:>2}  accuracy {:.4}", s.stage, s.bits, s.accuracy)
        })?;
    }
    if let Some(acc) = accuracy.original {
        out.text(&format!("original float accuracy {acc:.4}"))?;
    }
    out.text(&format!("wrote {}", args.csv.display()))?;

    let m = &bundle.manifest;
    let throttle = ThrottleConfig::new(args.rate, Duration::from_millis(args.tick_ms));
    let per_stage = throttle.transfer_time(m.payload_bytes()).as_secs_f64() * 1e3 / m.stage_count() as f64;
    let infer_delay_ms = match args.infer_delay {
        InferDelay::Millis(ms) => ms,
        InferDelay::Fraction(f) => f * per_stage,
    };
    let infer_delay = Duration::from_secs_f64(infer_delay_ms / 1e3);

    let files = BundleFiles::from_dir(&args.bundle)?;
    let addr = SocketAddr::new(Ipv4Addr::LOCALHOST.into(), args.port);
    let server = serve(files, addr, throttle, RequestLog::new()).await?;
    let client = BundleClient::new(server.url());
    let options = |concurrent| SessionOptions {
        concurrent,
        infer_delay,
        ..Default::default()
    };

    let timed = async {
        // opens the keep-alive connection so no mode pays for it
        singleton_session(&client, &input, &options(true)).await?;
        let mut totals: [Vec<f64>; 3] = Default::default();
        let mut stage_ms: [Vec<f64>; 3] = Default::default();
        let mut finals: [Option<Prediction>; 3] = Default::default();
        for _ in 0..args.runs {
            let single = singleton_session(&client, &input, &options(true)).await?;
            totals[0].push(single.total.as_secs_f64() * 1e3);
            stage_ms[0] = vec![single.total.as_secs_f64() * 1e3];
            finals[0] = Some(single.prediction);
            for (i, concurrent) in [(1, true), (2, false)] {
                let session = ProgressiveSession::start(client.clone(), input.clone(), options(concurrent));
                let (results, summary) = session.collect().await?;
                totals[i].push(summary.total.as_secs_f64() * 1e3);
                stage_ms[i] = results.iter().filter_map(|r| r.timing.infer_end_ms).collect();
                finals[i] = results.last().map(|r| r.prediction.clone());
            }
        }
        Ok::<_, CliError>((totals, stage_ms, finals))
    }
    .await;
    server.shutdown().await;
    let (totals, stage_ms, finals) = timed?;

    if finals[1] != finals[0] || finals[2] != finals[0] {
        return Err(CliError::Verification(
            "final progressive prediction differs from the singleton prediction".into(),
        ));
    }
    let final_accuracy = accuracy.final_stage().map_or(f64::NAN, |s| s.accuracy);
    let single = median(&totals[0]);
    let rows: Vec<BenchRow> = [SINGLETON, CONCURRENT, SERIALIZED]
        .into_iter()
        .enumerate()
        .map(|(i, mode)| BenchRow {
            mode,
            total_ms: median(&totals[i]),
            totals_ms: totals[i].clone(),
            vs_singleton: median(&totals[i]) / single,
            stage_ms: stage_ms[i].clone(),
            final_accuracy,
        })
        .collect();

    out.text(&format!(
        "rate {} bytes/s, {} bytes in {} stages, inference delay {:.1} ms, {} run(s)",
        args.rate,
        m.payload_bytes(),
        m.stage_count(),
        infer_delay_ms,
        args.runs
    ))?;
    out.text(&format!(
        "{:<24} {:>10} {:>8} {:>9}  stage times (ms)",
        "mode", "total_ms", "ratio", "accuracy"
    ))?;
    for row in &rows {
        out.event("timing", row, || {
            let stages: Vec<String> = row.stage_ms.iter().map(|t| format!("{t:.0}")).collect();
            format!(
                "{:<24} {:>10.1} {:>8.3} {:>9.4}  {}",
                row.mode,
                row.total_ms,
                row.vs_singleton,
                row.final_accuracy,
                stages.join(",")
            )
        })?;
    }
    Ok(BenchReport {
        rate: args.rate,
        infer_delay_ms,
        payload_bytes: m.payload_bytes(),
        rows,
        accuracy,
    })
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
