pub mod bench;
pub mod control;
pub mod convert;
pub mod infer;
pub mod serve;
pub mod session;
pub mod train;

use std::path::Path;

use progrnet_core::{LabeledDataset, Tensor};

use crate::args::InputArgs;
use crate::error::CliError;

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path.display(), e))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::io(path.display(), e))
}

pub(crate) fn read_dataset(path: &Path) -> Result<LabeledDataset, CliError> {
    LabeledDataset::read(path).map_err(|e| CliError::io(path.display(), e))
}

pub(crate) fn load_input(args: &InputArgs) -> Result<Tensor, CliError> {
    match (&args.input, &args.dataset) {
        (Some(path), _) => read_json(path),
        (None, Some(path)) => {
            let data = read_dataset(path)?;
            data.get(args.index).map(|(x, _)| x.clone()).ok_or_else(|| {
                CliError::Usage(format!(
                    "--index {} is out of range, the dataset has {} samples",
                    args.index,
                    data.len()
                ))
            })
        }
        (None, None) => Err(CliError::Usage(
            "an input is required: pass --dataset (with --index) or --input".into(),
        )),
    }
}

pub(crate) async fn ctrl_c() -> Result<(), CliError> {
    tokio::signal::ctrl_c()
        .await
        .map_err(|e| CliError::io("signal handler", e))
}
