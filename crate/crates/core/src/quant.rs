//! Per-tensor affine quantization with flooring, and dequantization with a
//! half-interval correction.
//!
//! Codes are `floor(2^k (x - min) / (max - min + eps))` with
//! `eps = (max - min) * 2^-20`. Dequantizing with `received` most-significant
//! bits places each value at the centre of its `(max - min) / 2^received`
//! wide interval.

use crate::error::QuantError;
use crate::tensor::Tensor;

pub const MAX_BITS: u32 = 16;

/// Relative epsilon: `eps = (max - min) * EPS_SCALE`.
pub const EPS_SCALE: f64 = 1.0 / (1u64 << 20) as f64;

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    shape: Vec<usize>,
    bits: u32,
    min_val: f32,
    max_val: f32,
    codes: Vec<u16>,
}

impl QuantizedTensor {
    /// Assembles a quantized tensor from stored parts, checking every code
    /// fits in `bits`.
    pub fn from_parts(
        shape: Vec<usize>,
        bits: u32,
        min_val: f32,
        max_val: f32,
        codes: Vec<u16>,
    ) -> Result<Self, QuantError> {
        check_bits(bits)?;
        if !(min_val.is_finite() && max_val.is_finite() && min_val <= max_val) {
            return Err(QuantError::InvalidRange {
                min: min_val,
                max: max_val,
            });
        }
        if shape.iter().product::<usize>() != codes.len() || codes.is_empty() {
            return Err(QuantError::EmptyTensor);
        }
        if let Some((index, &code)) = codes.iter().enumerate().find(|(_, &c)| u32::from(c) >> bits != 0) {
            return Err(QuantError::CodeOutOfRange {
                index,
                code: code.into(),
                k: bits,
            });
        }
        Ok(Self {
            shape,
            bits,
            min_val,
            max_val,
            codes,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn min_val(&self) -> f32 {
        self.min_val
    }

    pub fn max_val(&self) -> f32 {
        self.max_val
    }

    pub fn codes(&self) -> &[u16] {
        &self.codes
    }

    /// Copy with the low `bits - keep` bits of every code cleared.
    pub fn truncated(&self, keep: u32) -> Result<Self, QuantError> {
        if keep == 0 || keep > self.bits {
            return Err(QuantError::InvalidReceivedBits {
                received: keep,
                k: self.bits,
            });
        }
        let mask = !((1u32 << (self.bits - keep)) - 1);
        let codes = self.codes.iter().map(|&c| (u32::from(c) & mask) as u16).collect();
        Ok(Self { codes, ..self.clone() })
    }
}

fn check_bits(bits: u32) -> Result<(), QuantError> {
    if (1..=MAX_BITS).contains(&bits) {
        Ok(())
    } else {
        Err(QuantError::InvalidBits(bits))
    }
}

pub fn quantize(t: &Tensor, bits: u32) -> Result<QuantizedTensor, QuantError> {
    check_bits(bits)?;
    if t.numel() == 0 {
        return Err(QuantError::EmptyTensor);
    }
    let (min_val, max_val) = t.min_max();
    let codes = quantize_values(t.data(), bits, min_val, max_val);
    Ok(QuantizedTensor {
        shape: t.shape().to_vec(),
        bits,
        min_val,
        max_val,
        codes,
    })
}

fn quantize_values(data: &[f32], bits: u32, min_val: f32, max_val: f32) -> Vec<u16> {
    if min_val == max_val {
        return vec![0; data.len()];
    }
    let lo = f64::from(min_val);
    let range = f64::from(max_val) - lo;
    let levels = (1u32 << bits) as f64;
    let top = (1u32 << bits) - 1;
    let scale = levels / (range + range * EPS_SCALE);
    data.iter()
        .map(|&x| {
            let code = ((f64::from(x) - lo) * scale).floor();
            // float rounding can land exactly on 2^k
            (code.max(0.0) as u32).min(top) as u16
        })
        .collect()
}

/// Restores floats from codes of which only the top `received` bits are
/// meaningful.
pub fn dequantize(q: &QuantizedTensor, received: u32) -> Result<Tensor, QuantError> {
    if received == 0 || received > q.bits {
        return Err(QuantError::InvalidReceivedBits { received, k: q.bits });
    }
    let data = if q.min_val == q.max_val {
        vec![q.min_val; q.codes.len()]
    } else {
        let lo = f64::from(q.min_val);
        let range = f64::from(q.max_val) - lo;
        let step = range / (1u32 << q.bits) as f64;
        let correction = range / (1u64 << (received + 1)) as f64;
        q.codes
            .iter()
            .map(|&c| (step * f64::from(c) + lo + correction) as f32)
            .collect()
    };
    Ok(Tensor::new(q.shape.clone(), data).expect("dequantized values are finite"))
}
