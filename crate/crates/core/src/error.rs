use std::fmt;

/// Shape written as `3` for vectors and `[2, 3, 3]` otherwise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeDisplay(pub Vec<usize>);

impl fmt::Display for ShapeDisplay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0.as_slice() {
            [n] => write!(f, "{n}"),
            dims => write!(f, "{dims:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("shape {shape:?} holds {expected} elements but data has {actual}")]
    LengthMismatch {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("shape {0:?} has a zero dimension")]
    ZeroDimension(Vec<usize>),
    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f32 },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("layer{layer} expects input {expected}, declared {actual}")]
    ShapeMismatch {
        layer: usize,
        expected: ShapeDisplay,
        actual: ShapeDisplay,
    },
    #[error("layer{layer}: {reason}")]
    InvalidLayer { layer: usize, reason: String },
    #[error("softmax is only allowed as the final activation (found on layer{0})")]
    SoftmaxNotFinal(usize),
    #[error("model has no layers")]
    Empty,
    #[error("missing tensor {0}")]
    MissingTensor(String),
    #[error("unexpected tensor {0}")]
    ExtraTensor(String),
    #[error("tensor {name} has shape {actual:?}, expected {expected:?}")]
    TensorShape {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QuantError {
    #[error("bit width {0} outside 1..=16")]
    InvalidBits(u32),
    #[error("received bits {received} outside 1..={k}")]
    InvalidReceivedBits { received: u32, k: u32 },
    #[error("cannot quantize an empty tensor")]
    EmptyTensor,
    #[error("code {code} at index {index} does not fit in {k} bits")]
    CodeOutOfRange { index: usize, code: u32, k: u32 },
    #[error("invalid range: min {min} max {max}")]
    InvalidRange { min: f32, max: f32 },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CodecError {
    #[error("cannot parse bit schedule {0:?}")]
    Parse(String),
    #[error("bit schedule is empty")]
    EmptySchedule,
    #[error("bit schedule {0:?} is not strictly increasing from at least 1")]
    NotIncreasing(Vec<u32>),
    #[error("bit schedule must end at k={k}, ends at {last}")]
    WrongEnd { k: u32, last: u32 },
    #[error("bit width {0} outside 1..=16")]
    InvalidBits(u32),
    #[error("stage {stage} outside 1..={stages}")]
    StageOutOfRange { stage: usize, stages: usize },
    #[error("code {code} does not fit in {k} bits")]
    CodeOutOfRange { code: u32, k: u32 },
    #[error("fragment {value} for stage {stage} exceeds width {width}")]
    FragmentOutOfRange { stage: usize, value: u32, width: u32 },
    #[error("too many fragments: {got} for a {stages}-stage schedule")]
    TooManyFragments { got: usize, stages: usize },
    #[error("fragment plane length {actual} does not match {expected} codes")]
    PlaneLength { expected: usize, actual: usize },
}

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("unknown stage {stage} (bundle has {stages})")]
    UnknownStage { stage: usize, stages: usize },
    #[error("stage {stage}: expected {expected} bytes, got {actual}")]
    Length {
        stage: usize,
        expected: usize,
        actual: usize,
    },
    #[error("stage {stage}: checksum mismatch (expected {expected:08x}, got {actual:08x})")]
    Checksum { stage: usize, expected: u32, actual: u32 },
    #[error("stage {got} applied out of order, expected stage {expected}")]
    OutOfOrder { expected: usize, got: usize },
    #[error("no stage has been applied yet")]
    NothingReceived,
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("invalid float literal {0:?}")]
    FloatLiteral(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Quant(#[from] QuantError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, thiserror::Error)]
pub enum InferenceError {
    #[error("input shape {actual:?} does not match model input {expected:?}")]
    InputShape { expected: Vec<usize>, actual: Vec<usize> },
    #[error("layer{0} produced a non-finite value")]
    NonFinite(usize),
    #[error("model output must be a vector, got shape {0:?}")]
    OutputShape(Vec<usize>),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("training reached accuracy {achieved:.4}, below target {target:.4}")]
    TargetNotReached { achieved: f64, target: f64 },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Quant(#[from] QuantError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
