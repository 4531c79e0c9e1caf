//! Progressive transmission of quantized model weights.
//!
//! Weights are quantized per tensor to `k`-bit codes, the codes are split
//! into most-significant-first bit planes according to a [`BitSchedule`], and
//! each plane is packed into one stage blob. A receiver that has the first
//! `m` stages can OR them back together and dequantize an approximate model
//! whose precision grows with every stage; after the last stage the weights
//! are exactly the `k`-bit quantized model.

pub mod bundle;
pub mod codec;
pub mod dataset;
pub mod error;
pub mod model;
pub mod nn;
pub mod pack;
pub mod portable;
pub mod quant;
pub mod stages;
pub mod tensor;
pub mod train;

pub use bundle::{
    decode_stage, encode_bundle, quantize_roundtrip, split_singleton, Bundle, BundleManifest, ReconstructionState,
    StageBlob,
};
pub use codec::{accumulate, concatenate, divide, BitSchedule, FragmentPlane};
pub use dataset::{gaussian_blobs, BlobsConfig, LabeledDataset};
pub use error::{CodecError, FormatError, InferenceError, ModelError, QuantError, TensorError};
pub use model::{validate_model, Activation, Layer, ModelSpec, WeightSet};
pub use nn::{evaluate, forward, Prediction};
pub use quant::{dequantize, quantize, QuantizedTensor};
pub use stages::{accuracy_by_stage, StageAccuracy, StageAccuracyTable};
pub use tensor::Tensor;
pub use train::{train_demo, DemoModel, TrainConfig};
