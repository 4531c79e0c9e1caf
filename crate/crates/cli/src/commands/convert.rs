use progrnet_core::{encode_bundle, portable, Bundle, ModelSpec};
use serde::Serialize;

use crate::args::ConvertArgs;
use crate::commands::read_json;
use crate::error::CliError;
use crate::output::Output;

#[derive(Debug, Clone, Serialize)]
pub struct StageSize {
    pub stage: usize,
    pub bits: u32,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvertReport {
    pub stages: usize,
    pub payload_bytes: u64,
    /// Size of the same tensors packed once at k bits.
    pub baseline_bytes: u64,
    pub overhead_pct: f64,
}

pub fn run(args: &ConvertArgs, out: &mut Output<'_>) -> Result<(Bundle, ConvertReport), CliError> {
    let sched = args.codec.bit_schedule()?;
    let spec: ModelSpec = read_json(&args.model)?;
    let weights = portable::read(&args.weights).map_err(|e| CliError::io(args.weights.display(), e))?;
    let bundle = encode_bundle(&spec, &weights, args.codec.bits, &sched)?;
    bundle
        .write_dir(&args.output)
        .map_err(|e| CliError::io(args.output.display(), e))?;

    let m = &bundle.manifest;
    for s in &m.stages {
        let size = StageSize {
            stage: s.stage,
            bits: m.bits_after(s.stage),
            bytes: s.byte_length,
        };
        out.event("stage", &size, || {
            format!(
                "stage {:>2}  bits {:>2}  {:>10} bytes",
                size.stage, size.bits, size.bytes
            )
        })?;
    }
    let report = report(&bundle);
    out.event("bundle", &report, || {
        format!(
            "{} stages, {} bytes; {} bytes at {} bits in one piece, overhead {:.3}%\nwrote {}",
            report.stages,
            report.payload_bytes,
            report.baseline_bytes,
            m.k,
            report.overhead_pct,
            args.output.display()
        )
    })?;
    Ok((bundle, report))
}

pub fn report(bundle: &Bundle) -> ConvertReport {
    let m = &bundle.manifest;
    let baseline_bytes: u64 = m
        .tensors
        .iter()
        .map(|t| (t.shape.iter().product::<usize>() as u64 * u64::from(m.k)).div_ceil(8))
        .sum();
    let payload_bytes = m.payload_bytes();
    ConvertReport {
        stages: m.stages.len(),
        payload_bytes,
        baseline_bytes,
        overhead_pct: (payload_bytes as f64 / baseline_bytes as f64 - 1.0) * 100.0,
    }
}
