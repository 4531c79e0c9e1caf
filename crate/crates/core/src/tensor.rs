use serde::{Deserialize, Serialize};

use crate::error::TensorError;

/// Dense row-major `f32` array. Every element is finite and the data length
/// always equals the product of the shape.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, TensorError> {
        if shape.contains(&0) {
            return Err(TensorError::ZeroDimension(shape));
        }
        let expected = numel(&shape);
        if expected != data.len() {
            return Err(TensorError::LengthMismatch {
                shape,
                expected,
                actual: data.len(),
            });
        }
        if let Some((index, &value)) = data.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(TensorError::NonFinite { index, value });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self, TensorError> {
        let n = numel(&shape);
        Self::new(shape, vec![0.0; n])
    }

    pub fn vector(data: Vec<f32>) -> Result<Self, TensorError> {
        Self::new(vec![data.len()], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Same data viewed under another shape with the same element count.
    pub fn reshaped(self, shape: Vec<usize>) -> Result<Self, TensorError> {
        Self::new(shape, self.data)
    }

    /// Minimum and maximum element.
    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

impl<'de> Deserialize<'de> for Tensor {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            shape: Vec<usize>,
            data: Vec<f32>,
        }
        let raw = Raw::deserialize(deserializer)?;
        Tensor::new(raw.shape, raw.data).map_err(serde::de::Error::custom)
    }
}

pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_length_mismatch() {
        let err = Tensor::new(vec![2, 2], vec![1.0; 3]).unwrap_err();
        assert!(matches!(
            err,
            TensorError::LengthMismatch {
                expected: 4,
                actual: 3,
                ..
            }
        ));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(
            Tensor::vector(vec![0.0, f32::NAN]),
            Err(TensorError::NonFinite { index: 1, .. })
        ));
        assert!(Tensor::vector(vec![f32::INFINITY]).is_err());
        assert!(Tensor::vector(vec![f32::NEG_INFINITY]).is_err());
    }

    #[test]
    fn rejects_zero_dims() {
        assert!(Tensor::new(vec![0, 3], vec![]).is_err());
        assert!(Tensor::vector(vec![]).is_err());
    }

    #[test]
    fn min_max() {
        let t = Tensor::new(vec![2, 2], vec![3.0, -1.0, 0.5, 2.0]).unwrap();
        assert_eq!(t.min_max(), (-1.0, 3.0));
    }

    #[test]
    fn deserialize_validates() {
        let ok: Tensor = serde_json::from_str(r#"{"shape":[2],"data":[1.0,2.0]}"#).unwrap();
        assert_eq!(ok.numel(), 2);
        assert!(serde_json::from_str::<Tensor>(r#"{"shape":[3],"data":[1.0,2.0]}"#).is_err());
    }
}
