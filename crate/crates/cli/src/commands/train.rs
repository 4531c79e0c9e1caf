use std::path::{Path, PathBuf};

use progrnet_core::{portable, train_demo, DemoModel, TrainConfig};
use serde::Serialize;

use crate::args::TrainDemoArgs;
use crate::error::CliError;
use crate::output::Output;

pub const MODEL_FILE: &str = "model.json";
pub const WEIGHTS_FILE: &str = "weights.json";
pub const DATASET_FILE: &str = "dataset.json";

#[derive(Debug, Serialize)]
struct Trained<'a> {
    seed: u64,
    test_accuracy: f64,
    params: usize,
    model: &'a Path,
    weights: &'a Path,
    dataset: &'a Path,
}

pub fn run(args: &TrainDemoArgs, out: &mut Output<'_>) -> Result<DemoModel, CliError> {
    let mut config = TrainConfig::default();
    if let Some(epochs) = args.epochs {
        config.epochs = epochs;
    }
    let demo = train_demo(args.seed, &config)?;
    let [model, weights, dataset] = write_demo(&demo, &args.output)?;
    let report = Trained {
        seed: args.seed,
        test_accuracy: demo.test_accuracy,
        params: demo.weights.total_params(),
        model: &model,
        weights: &weights,
        dataset: &dataset,
    };
    out.event("trained", &report, || {
        format!(
            "trained {} parameters, held-out accuracy {:.4}\nwrote {}, {}, {}",
            report.params,
            report.test_accuracy,
            model.display(),
            weights.display(),
            dataset.display()
        )
    })?;
    Ok(demo)
}

/// Writes the model description, portable weights and the held-out split.
pub fn write_demo(demo: &DemoModel, dir: &Path) -> Result<[PathBuf; 3], CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
    let model = dir.join(MODEL_FILE);
    let spec = serde_json::to_vec_pretty(&demo.spec).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(&model, spec).map_err(|e| CliError::io(model.display(), e))?;
    let weights = dir.join(WEIGHTS_FILE);
    portable::write(&weights, &demo.weights)?;
    let dataset = dir.join(DATASET_FILE);
    demo.test.write(&dataset)?;
    Ok([model, weights, dataset])
}
