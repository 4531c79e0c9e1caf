//! Labeled samples and a seeded Gaussian-cluster generator.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{FormatError, InferenceError};
use crate::tensor::{numel, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub num_classes: usize,
    pub input_shape: Vec<usize>,
    pub seed: u64,
    inputs: Vec<Tensor>,
    labels: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(
        num_classes: usize,
        input_shape: Vec<usize>,
        seed: u64,
        samples: Vec<(Tensor, usize)>,
    ) -> Result<Self, InferenceError> {
        let mut inputs = Vec::with_capacity(samples.len());
        let mut labels = Vec::with_capacity(samples.len());
        for (i, (x, y)) in samples.into_iter().enumerate() {
            if y >= num_classes {
                return Err(InferenceError::Config(format!(
                    "sample {i} has label {y}, only {num_classes} classes"
                )));
            }
            if x.shape() != input_shape.as_slice() {
                return Err(InferenceError::InputShape {
                    expected: input_shape,
                    actual: x.shape().to_vec(),
                });
            }
            inputs.push(x);
            labels.push(y);
        }
        Ok(Self {
            num_classes,
            input_shape,
            seed,
            inputs,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<(&Tensor, usize)> {
        Some((self.inputs.get(index)?, self.labels[index]))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Tensor, usize)> {
        self.inputs.iter().zip(self.labels.iter().copied())
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Samples reordered by `order` (a permutation of indices).
    pub fn reordered(&self, order: &[usize]) -> Self {
        Self {
            inputs: order.iter().map(|&i| self.inputs[i].clone()).collect(),
            labels: order.iter().map(|&i| self.labels[i]).collect(),
            ..self.clone()
        }
    }

    /// Same samples with every label `y` replaced by `mapping[y]`.
    pub fn relabeled(&self, mapping: &[usize]) -> Self {
        Self {
            labels: self.labels.iter().map(|&y| mapping[y]).collect(),
            ..self.clone()
        }
    }

    pub fn split_at(&self, at: usize) -> (Self, Self) {
        let head = Self {
            inputs: self.inputs[..at].to_vec(),
            labels: self.labels[..at].to_vec(),
            ..self.clone()
        };
        let tail = Self {
            inputs: self.inputs[at..].to_vec(),
            labels: self.labels[at..].to_vec(),
            ..self.clone()
        };
        (head, tail)
    }

    pub fn to_json(&self) -> Result<Vec<u8>, FormatError> {
        let file = DatasetFile {
            num_classes: self.num_classes,
            input_shape: self.input_shape.clone(),
            seed: self.seed,
            samples: self
                .iter()
                .map(|(x, label)| SampleRecord {
                    input: x.data().to_vec(),
                    label,
                })
                .collect(),
        };
        Ok(serde_json::to_vec(&file)?)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, FormatError> {
        let file: DatasetFile = serde_json::from_slice(bytes)?;
        let samples = file
            .samples
            .into_iter()
            .map(|s| Ok((Tensor::new(file.input_shape.clone(), s.input)?, s.label)))
            .collect::<Result<Vec<_>, FormatError>>()?;
        Self::new(file.num_classes, file.input_shape, file.seed, samples)
            .map_err(|e| FormatError::Manifest(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<(), FormatError> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, FormatError> {
        Self::from_json(&fs::read(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    num_classes: usize,
    input_shape: Vec<usize>,
    seed: u64,
    samples: Vec<SampleRecord>,
}

#[derive(Serialize, Deserialize)]
struct SampleRecord {
    input: Vec<f32>,
    label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobsConfig {
    pub dims: usize,
    pub classes: usize,
    pub samples: usize,
    /// Standard deviation of the cluster centres around the origin; sample
    /// noise has unit variance.
    pub center_spread: f32,
}

impl Default for BlobsConfig {
    fn default() -> Self {
        Self {
            dims: 32,
            classes: 8,
            samples: 3000,
            center_spread: 0.9,
        }
    }
}

/// Isotropic Gaussian clusters, one per class, balanced and shuffled.
pub fn gaussian_blobs(config: &BlobsConfig, seed: u64) -> Result<LabeledDataset, InferenceError> {
    if config.dims == 0 || config.classes < 2 || config.samples == 0 {
        return Err(InferenceError::Config(format!("degenerate blobs config {config:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spread = Normal::new(0.0f32, config.center_spread).map_err(|e| InferenceError::Config(e.to_string()))?;
    let noise = Normal::new(0.0f32, 1.0).expect("unit normal");
    let centers: Vec<Vec<f32>> = (0..config.classes)
        .map(|_| (0..config.dims).map(|_| spread.sample(&mut rng)).collect())
        .collect();
    let mut labels: Vec<usize> = (0..config.samples).map(|i| i % config.classes).collect();
    labels.shuffle(&mut rng);
    let samples = labels
        .into_iter()
        .map(|y| {
            let data = centers[y].iter().map(|c| c + noise.sample(&mut rng)).collect();
            (Tensor::vector(data).expect("finite samples"), y)
        })
        .collect();
    LabeledDataset::new(config.classes, vec![config.dims], seed, samples)
}

pub(crate) fn input_len(ds: &LabeledDataset) -> usize {
    numel(&ds.input_shape)
}
