//! Forward pass for dense / conv2d / max-pool / flatten stacks.

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::InferenceError;
use crate::model::{bias_name, validate_model, weight_name, Activation, Layer, ModelSpec, WeightSet};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: usize,
    pub probabilities: Vec<f64>,
}

impl Prediction {
    /// Softmax over `logits`, computed in `f64`.
    pub fn from_logits(logits: &[f32]) -> Self {
        let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let exps: Vec<f64> = logits.iter().map(|&v| f64::from(v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let probabilities: Vec<f64> = exps.iter().map(|e| e / total).collect();
        let class = argmax(&probabilities);
        Self { class, probabilities }
    }

    pub fn confidence(&self) -> f64 {
        self.probabilities[self.class]
    }
}

/// Index of the first maximum.
fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) },
        )
        .0
}

/// Runs the model and returns the class distribution. When the final layer
/// declares softmax (or no activation) the probabilities are the softmax of
/// its pre-activation output.
pub fn forward(spec: &ModelSpec, weights: &WeightSet, input: &Tensor) -> Result<Prediction, InferenceError> {
    let logits = run(spec, weights, input, false)?;
    if logits.shape().len() != 1 {
        return Err(InferenceError::OutputShape(logits.shape().to_vec()));
    }
    Ok(Prediction::from_logits(logits.data()))
}

/// Raw model output with every declared activation applied.
pub fn forward_output(spec: &ModelSpec, weights: &WeightSet, input: &Tensor) -> Result<Tensor, InferenceError> {
    run(spec, weights, input, true)
}

fn run(spec: &ModelSpec, weights: &WeightSet, input: &Tensor, final_softmax: bool) -> Result<Tensor, InferenceError> {
    validate_model(spec, weights)?;
    if input.shape() != spec.input_shape.as_slice() {
        return Err(InferenceError::InputShape {
            expected: spec.input_shape.clone(),
            actual: input.shape().to_vec(),
        });
    }
    let last = spec.layers.len() - 1;
    let mut x = input.clone();
    for (i, layer) in spec.layers.iter().enumerate() {
        let param = |name: String| weights.get(&name).expect("validated");
        let (shape, mut data) = match *layer {
            Layer::Dense { out_features, .. } => (
                vec![out_features],
                dense(param(weight_name(i)), param(bias_name(i)), x.data()),
            ),
            Layer::Conv2d { stride, padding, .. } => {
                conv2d(param(weight_name(i)), param(bias_name(i)), &x, stride, padding)
            }
            Layer::MaxPool2d { window, stride } => max_pool(&x, window, stride),
            Layer::Flatten => (vec![x.numel()], x.data().to_vec()),
        };
        match layer.activation() {
            Activation::Relu => data.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Softmax if i == last && !final_softmax => {}
            Activation::Softmax => softmax_in_place(&mut data),
            Activation::None => {}
        }
        x = Tensor::new(shape, data).map_err(|_| InferenceError::NonFinite(i))?;
    }
    Ok(x)
}

fn softmax_in_place(data: &mut [f32]) {
    let p = Prediction::from_logits(data);
    for (d, v) in data.iter_mut().zip(p.probabilities) {
        *d = v as f32;
    }
}

fn dense(weight: &Tensor, bias: &Tensor, x: &[f32]) -> Vec<f32> {
    let cols = x.len();
    weight
        .data()
        .chunks_exact(cols)
        .zip(bias.data())
        .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f32>())
        .collect()
}

/// Cross-correlation with zero padding.
fn conv2d(weight: &Tensor, bias: &Tensor, x: &Tensor, stride: usize, padding: usize) -> (Vec<usize>, Vec<f32>) {
    let &[out_c, in_c, kh, kw] = weight.shape() else {
        unreachable!("validated conv weight")
    };
    let &[_, h, w] = x.shape() else {
        unreachable!("validated conv input")
    };
    let oh = (h + 2 * padding - kh) / stride + 1;
    let ow = (w + 2 * padding - kw) / stride + 1;
    let (wd, xd) = (weight.data(), x.data());
    let mut out = Vec::with_capacity(out_c * oh * ow);
    for o in 0..out_c {
        for r in 0..oh {
            for c in 0..ow {
                let mut acc = bias.data()[o];
                for ci in 0..in_c {
                    for i in 0..kh {
                        let Some(y) = (r * stride + i).checked_sub(padding).filter(|&y| y < h) else {
                            continue;
                        };
                        for j in 0..kw {
                            let Some(xx) = (c * stride + j).checked_sub(padding).filter(|&v| v < w) else {
                                continue;
                            };
                            acc += wd[((o * in_c + ci) * kh + i) * kw + j] * xd[(ci * h + y) * w + xx];
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    (vec![out_c, oh, ow], out)
}

fn max_pool(x: &Tensor, window: usize, stride: usize) -> (Vec<usize>, Vec<f32>) {
    let &[ch, h, w] = x.shape() else {
        unreachable!("validated pool input")
    };
    let oh = (h - window) / stride + 1;
    let ow = (w - window) / stride + 1;
    let xd = x.data();
    let mut out = Vec::with_capacity(ch * oh * ow);
    for c in 0..ch {
        for r in 0..oh {
            for col in 0..ow {
                let mut m = f32::NEG_INFINITY;
                for i in 0..window {
                    for j in 0..window {
                        m = m.max(xd[(c * h + r * stride + i) * w + col * stride + j]);
                    }
                }
                out.push(m);
            }
        }
    }
    (vec![ch, oh, ow], out)
}

/// Top-1 accuracy over a dataset.
pub fn evaluate(spec: &ModelSpec, weights: &WeightSet, dataset: &LabeledDataset) -> Result<f64, InferenceError> {
    if dataset.is_empty() {
        return Err(InferenceError::EmptyDataset);
    }
    let mut correct = 0usize;
    for (input, label) in dataset.iter() {
        if forward(spec, weights, input)?.class == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}
