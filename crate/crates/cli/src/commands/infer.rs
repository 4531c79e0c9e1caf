use std::time::Duration;

use progrnet_client::{BundleClient, ProgressiveSession, SessionOptions, SessionSummary, StageResult};
use serde::Serialize;

use crate::args::InferArgs;
use crate::commands::load_input;
use crate::error::CliError;
use crate::output::Output;

#[derive(Debug, Serialize)]
struct StageLine<'a> {
    stage: usize,
    bits: u32,
    class: usize,
    confidence: f64,
    elapsed_ms: f64,
    probabilities: &'a [f64],
}

#[derive(Debug, Serialize)]
struct Done {
    status: String,
    stages_received: usize,
    total_stages: usize,
    bytes: u64,
    total_ms: f64,
}

/// Streams the bundle and prints a line per inferred stage. Ctrl-C stops
/// the session; `--stop-after m` ends it before stage m+1 is requested.
pub async fn run(args: &InferArgs, out: &mut Output<'_>) -> Result<(Vec<StageResult>, SessionSummary), CliError> {
    let input = load_input(&args.input)?;
    let options = SessionOptions {
        concurrent: args.concurrent.is_on(),
        max_stages: args.stop_after.map(|m| m as usize),
        infer_delay: Duration::from_millis(args.infer_delay_ms),
        retries: args.retries,
    };
    let mut session = ProgressiveSession::start(BundleClient::new(&args.url), input, options);
    let controller = session.controller();
    let interrupt = tokio::spawn(async move {
        if tokio::signal::ctrl_c().await.is_ok() {
            tracing::info!("interrupted");
            let _ = controller.stop();
        }
    });

    let mut results = Vec::new();
    while let Some(r) = session.next_result().await {
        let line = StageLine {
            stage: r.stage,
            bits: r.bits,
            class: r.prediction.class,
            confidence: r.prediction.confidence(),
            elapsed_ms: r.timing.infer_end_ms.unwrap_or(r.timing.transfer_end_ms),
            probabilities: &r.prediction.probabilities,
        };
        out.event("stage", &line, || {
            format!(
                "stage {:>2}  bits {:>2}  class {:>3}  confidence {:.4}  elapsed {:>9.1} ms",
                line.stage, line.bits, line.class, line.confidence, line.elapsed_ms
            )
        })?;
        results.push(r);
    }
    let finished = session.finish().await;
    interrupt.abort();
    let summary = finished?;
    let s = &summary.state;
    let done = Done {
        status: s.status.to_string(),
        stages_received: s.stages_received,
        total_stages: s.total_stages,
        bytes: s.bytes_received,
        total_ms: summary.total.as_secs_f64() * 1e3,
    };
    out.event("done", &done, || {
        format!(
            "{}: {}/{} stages, {} bytes, {:.1} ms",
            done.status, done.stages_received, done.total_stages, done.bytes, done.total_ms
        )
    })?;
    Ok((results, summary))
}
