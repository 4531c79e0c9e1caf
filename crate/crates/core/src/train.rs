//! Mini-batch SGD for small MLP classifiers, used to produce a seeded demo
//! model for the accuracy and timing experiments.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{self, gaussian_blobs, BlobsConfig, LabeledDataset};
use crate::error::InferenceError;
use crate::model::{bias_name, weight_name, ModelSpec, WeightSet};
use crate::nn;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub data: BlobsConfig,
    /// Samples held out for evaluation, taken from the end of the generated set.
    pub test_samples: usize,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub target_accuracy: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            data: BlobsConfig::default(),
            test_samples: 1000,
            hidden: vec![512, 512],
            epochs: 4,
            batch_size: 32,
            learning_rate: 0.02,
            target_accuracy: 0.95,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DemoModel {
    pub spec: ModelSpec,
    pub weights: WeightSet,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub test_accuracy: f64,
}

struct DenseParams {
    rows: usize,
    cols: usize,
    weight: Vec<f32>,
    bias: Vec<f32>,
}

/// Generates the dataset, trains an MLP on it and checks held-out accuracy.
/// Fully determined by `seed` and `config`.
pub fn train_demo(seed: u64, config: &TrainConfig) -> Result<DemoModel, InferenceError> {
    if config.test_samples == 0 || config.test_samples >= config.data.samples {
        return Err(InferenceError::Config("test_samples must leave training data".into()));
    }
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(InferenceError::Config("batch_size and epochs must be positive".into()));
    }
    let all = gaussian_blobs(&config.data, seed)?;
    let (train, test) = all.split_at(all.len() - config.test_samples);

    let mut dims = vec![dataset::input_len(&train)];
    dims.extend(&config.hidden);
    dims.push(train.num_classes);
    let spec = ModelSpec::mlp(&dims);

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_7a1e);
    let mut layers: Vec<DenseParams> = dims
        .windows(2)
        .map(|w| {
            let he = Normal::new(0.0f32, (2.0 / w[0] as f32).sqrt()).expect("positive std");
            DenseParams {
                rows: w[1],
                cols: w[0],
                weight: (0..w[0] * w[1]).map(|_| he.sample(&mut rng)).collect(),
                bias: vec![0.0; w[1]],
            }
        })
        .collect();

    let mut order: Vec<usize> = (0..train.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            sgd_step(&mut layers, &train, batch, config.learning_rate);
        }
    }

    let weights: WeightSet = layers
        .into_iter()
        .enumerate()
        .flat_map(|(i, p)| {
            [
                (weight_name(i), Tensor::new(vec![p.rows, p.cols], p.weight)),
                (bias_name(i), Tensor::vector(p.bias)),
            ]
        })
        .map(|(n, t)| t.map(|t| (n, t)))
        .collect::<Result<_, _>>()?;

    let test_accuracy = nn::evaluate(&spec, &weights, &test)?;
    if test_accuracy < config.target_accuracy {
        return Err(InferenceError::TargetNotReached {
            achieved: test_accuracy,
            target: config.target_accuracy,
        });
    }
    Ok(DemoModel {
        spec,
        weights,
        train,
        test,
        test_accuracy,
    })
}

/// One averaged-gradient step of softmax cross-entropy over `batch`.
fn sgd_step(layers: &mut [DenseParams], data: &LabeledDataset, batch: &[usize], lr: f32) {
    let mut grads: Vec<(Vec<f32>, Vec<f32>)> = layers
        .iter()
        .map(|p| (vec![0.0; p.weight.len()], vec![0.0; p.bias.len()]))
        .collect();
    let last = layers.len() - 1;

    for &idx in batch {
        let (x, label) = data.get(idx).expect("index in range");
        // activations[i] is the input to layer i
        let mut activations = vec![x.data().to_vec()];
        for (i, p) in layers.iter().enumerate() {
            let input = &activations[i];
            let mut out: Vec<f32> = p
                .weight
                .chunks_exact(p.cols)
                .zip(&p.bias)
                .map(|(row, b)| b + row.iter().zip(input).map(|(w, v)| w * v).sum::<f32>())
                .collect();
            if i != last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            activations.push(out);
        }

        let probs = nn::Prediction::from_logits(&activations[last + 1]).probabilities;
        let mut delta: Vec<f32> = probs.iter().map(|&p| p as f32).collect();
        delta[label] -= 1.0;

        for i in (0..layers.len()).rev() {
            let p = &layers[i];
            let input = &activations[i];
            let (gw, gb) = &mut grads[i];
            for (o, &d) in delta.iter().enumerate() {
                gb[o] += d;
                let row = &mut gw[o * p.cols..(o + 1) * p.cols];
                row.iter_mut().zip(input).for_each(|(g, v)| *g += d * v);
            }
            if i > 0 {
                let mut back = vec![0.0f32; p.cols];
                for (o, &d) in delta.iter().enumerate() {
                    let row = &p.weight[o * p.cols..(o + 1) * p.cols];
                    back.iter_mut().zip(row).for_each(|(b, w)| *b += w * d);
                }
                // relu derivative of the previous layer's output
                back.iter_mut().zip(input).for_each(|(b, &a)| {
                    if a <= 0.0 {
                        *b = 0.0
                    }
                });
                delta = back;
            }
        }
    }

    let scale = lr / batch.len() as f32;
    for (p, (gw, gb)) in layers.iter_mut().zip(grads) {
        p.weight.iter_mut().zip(gw).for_each(|(w, g)| *w -= scale * g);
        p.bias.iter_mut().zip(gb).for_each(|(b, g)| *b -= scale * g);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TrainConfig {
        TrainConfig {
            data: BlobsConfig {
                dims: 16,
                classes: 4,
                samples: 2000,
                center_spread: 0.9,
            },
            test_samples: 500,
            hidden: vec![32],
            epochs: 3,
            batch_size: 16,
            learning_rate: 0.05,
            target_accuracy: 0.95,
        }
    }

    #[test]
    fn small_model_learns() {
        let demo = train_demo(1, &small()).unwrap();
        assert!(demo.test_accuracy >= 0.95, "{}", demo.test_accuracy);
        assert_eq!(demo.train.len(), 1500);
        assert_eq!(demo.test.len(), 500);
    }

    #[test]
    fn deterministic_given_seed() {
        let a = train_demo(5, &small()).unwrap();
        let b = train_demo(5, &small()).unwrap();
        assert_eq!(a.weights, b.weights);
        for ((_, x), (_, y)) in a.weights.iter().zip(b.weights.iter()) {
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(x), bits(y));
        }
    }

    #[test]
    fn unreachable_target_is_an_error() {
        let cfg = TrainConfig {
            epochs: 1,
            target_accuracy: 1.01,
            ..small()
        };
        assert!(matches!(
            train_demo(1, &cfg),
            Err(InferenceError::TargetNotReached { .. })
        ));
    }

    #[test]
    fn relabeling_classes_preserves_accuracy() {
        // permuting class ids together with the output units is a symmetry
        let demo = train_demo(2, &small()).unwrap();
        let perm = [2usize, 0, 3, 1];
        let test = demo.test.relabeled(&perm);
        let last = demo.spec.layers.len() - 1;
        let mut weights = demo.weights.clone();
        for name in [weight_name(last), bias_name(last)] {
            let t = demo.weights.get(&name).unwrap();
            let cols = t.numel() / perm.len();
            let mut data = vec![0.0; t.numel()];
            for (old, &new) in perm.iter().enumerate() {
                data[new * cols..(new + 1) * cols].copy_from_slice(&t.data()[old * cols..(old + 1) * cols]);
            }
            weights.insert(name, Tensor::new(t.shape().to_vec(), data).unwrap());
        }
        let acc = nn::evaluate(&demo.spec, &weights, &test).unwrap();
        assert_eq!(acc, demo.test_accuracy);
    }
}
