//! Accuracy of each intermediate model of a bundle.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bundle::{quantize_roundtrip, Bundle, ReconstructionState};
use crate::dataset::LabeledDataset;
use crate::error::InferenceError;
use crate::model::WeightSet;
use crate::nn::evaluate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageAccuracy {
    pub stage: usize,
    pub bits: u32,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageAccuracyTable {
    pub stages: Vec<StageAccuracy>,
    /// Direct k-bit quantize/dequantize of the original weights.
    pub singleton: Option<f64>,
    /// Unquantized original weights.
    pub original: Option<f64>,
}

impl StageAccuracyTable {
    pub fn final_stage(&self) -> Option<&StageAccuracy> {
        self.stages.last()
    }

    pub fn at_bits(&self, bits: u32) -> Option<f64> {
        self.stages.iter().find(|s| s.bits == bits).map(|s| s.accuracy)
    }

    /// `stage,bits,accuracy` rows; the original model is written as stage
    /// `orig` with bits `32`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["stage", "bits", "accuracy"])?;
        for s in &self.stages {
            w.write_record([s.stage.to_string(), s.bits.to_string(), format!("{:.6}", s.accuracy)])?;
        }
        if let Some(acc) = self.original {
            w.write_record(["orig".to_string(), "32".to_string(), format!("{acc:.6}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Replays the bundle stage by stage and evaluates every intermediate model.
/// With `original` weights it also reports the k-bit singleton and float
/// accuracies.
pub fn accuracy_by_stage(
    bundle: &Bundle,
    dataset: &LabeledDataset,
    original: Option<&WeightSet>,
) -> Result<StageAccuracyTable, InferenceError> {
    let spec = &bundle.manifest.model;
    let mut state = ReconstructionState::new(Arc::new(bundle.manifest.clone()))?;
    let mut stages = Vec::with_capacity(bundle.stages.len());
    for blob in &bundle.stages {
        state.apply_blob(blob)?;
        let weights = state.materialize()?;
        stages.push(StageAccuracy {
            stage: state.received(),
            bits: state.effective_bits(),
            accuracy: evaluate(spec, &weights, dataset)?,
        });
    }
    let (singleton, original) = match original {
        Some(w) => {
            let q = quantize_roundtrip(w, bundle.manifest.k)?;
            (Some(evaluate(spec, &q, dataset)?), Some(evaluate(spec, w, dataset)?))
        }
        None => (None, None),
    };
    Ok(StageAccuracyTable {
        stages,
        singleton,
        original,
    })
}
