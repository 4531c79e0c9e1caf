//! Model architecture description and the named weight tensors it needs.
//!
//! Parameter tensors are named `layer{i}.weight` / `layer{i}.bias`, where `i`
//! is the index in [`ModelSpec::layers`] (parameter-free layers still take an
//! index). Dense weights are `(out, in)`; Conv2D weights are
//! `(out_channels, in_channels, kernel_h, kernel_w)`.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, ShapeDisplay};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    None,
    Relu,
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    Dense {
        in_features: usize,
        out_features: usize,
        #[serde(default)]
        activation: Activation,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        padding: usize,
        #[serde(default)]
        activation: Activation,
    },
    MaxPool2d {
        window: usize,
        stride: usize,
    },
    Flatten,
}

impl Layer {
    pub fn dense(in_features: usize, out_features: usize, activation: Activation) -> Self {
        Layer::Dense {
            in_features,
            out_features,
            activation,
        }
    }

    pub fn activation(&self) -> Activation {
        match self {
            Layer::Dense { activation, .. } | Layer::Conv2d { activation, .. } => *activation,
            _ => Activation::None,
        }
    }

    /// `(weight shape, bias shape)` for layers that carry parameters.
    pub fn param_shapes(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        match *self {
            Layer::Dense {
                in_features,
                out_features,
                ..
            } => Some((vec![out_features, in_features], vec![out_features])),
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                ..
            } => Some((vec![out_channels, in_channels, kernel_h, kernel_w], vec![out_channels])),
            Layer::MaxPool2d { .. } | Layer::Flatten => None,
        }
    }

    /// Output shape for the given input shape.
    pub fn output_shape(&self, index: usize, input: &[usize]) -> Result<Vec<usize>, ModelError> {
        let invalid = |reason: &str| ModelError::InvalidLayer {
            layer: index,
            reason: reason.to_string(),
        };
        match *self {
            Layer::Dense {
                in_features,
                out_features,
                ..
            } => {
                if in_features == 0 || out_features == 0 {
                    return Err(invalid("dense features must be positive"));
                }
                if input != [in_features] {
                    return Err(mismatch(index, input, vec![in_features]));
                }
                Ok(vec![out_features])
            }
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                stride,
                padding,
                ..
            } => {
                if in_channels == 0 || out_channels == 0 || kernel_h == 0 || kernel_w == 0 {
                    return Err(invalid("conv2d dimensions must be positive"));
                }
                if stride == 0 {
                    return Err(invalid("stride must be positive"));
                }
                let &[c, h, w] = input else {
                    return Err(mismatch(index, input, vec![in_channels, 0, 0]));
                };
                if c != in_channels {
                    return Err(mismatch(index, input, vec![in_channels, h, w]));
                }
                let (ph, pw) = (h + 2 * padding, w + 2 * padding);
                if ph < kernel_h || pw < kernel_w {
                    return Err(invalid("kernel larger than padded input"));
                }
                Ok(vec![
                    out_channels,
                    (ph - kernel_h) / stride + 1,
                    (pw - kernel_w) / stride + 1,
                ])
            }
            Layer::MaxPool2d { window, stride } => {
                if window == 0 || stride == 0 {
                    return Err(invalid("pool window and stride must be positive"));
                }
                let &[c, h, w] = input else {
                    return Err(invalid("max_pool2d needs a (channels, height, width) input"));
                };
                if h < window || w < window {
                    return Err(invalid("pool window larger than input"));
                }
                Ok(vec![c, (h - window) / stride + 1, (w - window) / stride + 1])
            }
            Layer::Flatten => Ok(vec![input.iter().product()]),
        }
    }
}

fn mismatch(layer: usize, produced: &[usize], declared: Vec<usize>) -> ModelError {
    ModelError::ShapeMismatch {
        layer,
        expected: ShapeDisplay(produced.to_vec()),
        actual: ShapeDisplay(declared),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<Layer>,
}

impl ModelSpec {
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>) -> Self {
        Self { input_shape, layers }
    }

    /// Fully connected stack: `dims[0] -> dims[1] -> ... -> dims[n]`, relu
    /// between layers and softmax on the last.
    pub fn mlp(dims: &[usize]) -> Self {
        let last = dims.len().saturating_sub(2);
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i == last {
                    Activation::Softmax
                } else {
                    Activation::Relu
                };
                Layer::dense(w[0], w[1], act)
            })
            .collect();
        Self::new(vec![dims[0]], layers)
    }

    /// Checks the layer chain and returns the per-layer output shapes.
    pub fn check(&self) -> Result<Vec<Vec<usize>>, ModelError> {
        if self.layers.is_empty() {
            return Err(ModelError::Empty);
        }
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(ModelError::InvalidLayer {
                layer: 0,
                reason: format!("invalid input shape {:?}", self.input_shape),
            });
        }
        let last = self.layers.len() - 1;
        let mut shape = self.input_shape.clone();
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.activation() == Activation::Softmax && i != last {
                return Err(ModelError::SoftmaxNotFinal(i));
            }
            shape = layer.output_shape(i, &shape)?;
            shapes.push(shape.clone());
        }
        Ok(shapes)
    }

    pub fn output_shape(&self) -> Result<Vec<usize>, ModelError> {
        Ok(self.check()?.pop().unwrap_or_default())
    }

    /// Parameter tensors in canonical (layer) order.
    pub fn required_tensors(&self) -> Vec<(String, Vec<usize>)> {
        self.layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.param_shapes().map(|s| (i, s)))
            .flat_map(|(i, (w, b))| [(weight_name(i), w), (bias_name(i), b)])
            .collect()
    }
}

pub fn weight_name(layer: usize) -> String {
    format!("layer{layer}.weight")
}

pub fn bias_name(layer: usize) -> String {
    format!("layer{layer}.bias")
}

/// Named parameter tensors, kept in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightSet {
    tensors: IndexMap<String, Tensor>,
}

impl WeightSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Option<Tensor> {
        self.tensors.insert(name.into(), tensor)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor> {
        self.tensors.shift_remove(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn total_params(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }
}

impl FromIterator<(String, Tensor)> for WeightSet {
    fn from_iter<I: IntoIterator<Item = (String, Tensor)>>(iter: I) -> Self {
        Self {
            tensors: iter.into_iter().collect(),
        }
    }
}

/// Ok iff the layer chain is consistent and `weights` holds exactly the
/// tensors the model needs with matching shapes. Reports the first problem.
pub fn validate_model(spec: &ModelSpec, weights: &WeightSet) -> Result<(), ModelError> {
    spec.check()?;
    let required = spec.required_tensors();
    for (name, shape) in &required {
        let tensor = weights
            .get(name)
            .ok_or_else(|| ModelError::MissingTensor(name.clone()))?;
        if tensor.shape() != shape.as_slice() {
            return Err(ModelError::TensorShape {
                name: name.clone(),
                expected: shape.clone(),
                actual: tensor.shape().to_vec(),
            });
        }
    }
    if let Some((extra, _)) = weights
        .iter()
        .find(|(name, _)| !required.iter().any(|(r, _)| r == name))
    {
        return Err(ModelError::ExtraTensor(extra.to_string()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weights_for(spec: &ModelSpec) -> WeightSet {
        spec.required_tensors()
            .into_iter()
            .map(|(name, shape)| (name, Tensor::zeros(shape).unwrap()))
            .collect()
    }

    #[test]
    fn consistent_mlp_validates() {
        let spec = ModelSpec::new(
            vec![4],
            vec![
                Layer::dense(4, 3, Activation::Relu),
                Layer::dense(3, 2, Activation::None),
            ],
        );
        validate_model(&spec, &weights_for(&spec)).unwrap();
    }

    #[test]
    fn dense_chain_mismatch_names_layer() {
        let spec = ModelSpec::new(
            vec![4],
            vec![
                Layer::dense(4, 3, Activation::Relu),
                Layer::dense(5, 2, Activation::None),
            ],
        );
        let err = validate_model(&spec, &WeightSet::new()).unwrap_err();
        assert_eq!(err.to_string(), "layer1 expects input 3, declared 5");
    }

    #[test]
    fn missing_tensor_is_named() {
        let spec = ModelSpec::mlp(&[4, 3, 2]);
        let mut w = weights_for(&spec);
        w.remove("layer0.bias");
        assert_eq!(
            validate_model(&spec, &w).unwrap_err(),
            ModelError::MissingTensor("layer0.bias".into())
        );
    }

    #[test]
    fn extra_and_misshaped_tensors() {
        let spec = ModelSpec::mlp(&[4, 3, 2]);
        let mut w = weights_for(&spec);
        w.insert("layer7.weight", Tensor::zeros(vec![1]).unwrap());
        assert_eq!(
            validate_model(&spec, &w).unwrap_err(),
            ModelError::ExtraTensor("layer7.weight".into())
        );

        let mut w = weights_for(&spec);
        w.insert("layer1.weight", Tensor::zeros(vec![3, 2]).unwrap());
        assert!(matches!(
            validate_model(&spec, &w),
            Err(ModelError::TensorShape { ref name, .. }) if name == "layer1.weight"
        ));
    }

    #[test]
    fn softmax_must_be_last() {
        let spec = ModelSpec::new(
            vec![4],
            vec![
                Layer::dense(4, 3, Activation::Softmax),
                Layer::dense(3, 2, Activation::None),
            ],
        );
        assert_eq!(spec.check().unwrap_err(), ModelError::SoftmaxNotFinal(0));
    }

    #[test]
    fn conv_pool_flatten_shapes() {
        let spec = ModelSpec::new(
            vec![1, 8, 8],
            vec![
                Layer::Conv2d {
                    in_channels: 1,
                    out_channels: 4,
                    kernel_h: 3,
                    kernel_w: 3,
                    stride: 1,
                    padding: 1,
                    activation: Activation::Relu,
                },
                Layer::MaxPool2d { window: 2, stride: 2 },
                Layer::Flatten,
                Layer::dense(64, 10, Activation::Softmax),
            ],
        );
        let shapes = spec.check().unwrap();
        assert_eq!(shapes, vec![vec![4, 8, 8], vec![4, 4, 4], vec![64], vec![10]]);
        let names: Vec<_> = spec.required_tensors().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["layer0.weight", "layer0.bias", "layer3.weight", "layer3.bias"]);
        validate_model(&spec, &weights_for(&spec)).unwrap();
    }

    #[test]
    fn conv_channel_mismatch() {
        let spec = ModelSpec::new(
            vec![3, 5, 5],
            vec![Layer::Conv2d {
                in_channels: 1,
                out_channels: 2,
                kernel_h: 2,
                kernel_w: 2,
                stride: 1,
                padding: 0,
                activation: Activation::None,
            }],
        );
        assert!(matches!(spec.check(), Err(ModelError::ShapeMismatch { layer: 0, .. })));
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = ModelSpec::mlp(&[32, 16, 4]);
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains(r#""kind":"dense""#));
        assert_eq!(serde_json::from_str::<ModelSpec>(&text).unwrap(), spec);
    }
}
