use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

/// Failures of tensor construction and recorded operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("shape {shape:?} needs {} elements, got {len}", shape.iter().product::<usize>())]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("{op}: non-finite value in output")]
    NonFinite { op: &'static str },
    #[error("{op}: {reason}")]
    InvalidArgument { op: &'static str, reason: String },
    #[error("{op}: spatial size {size} not divisible by {divisor}")]
    Indivisible { op: &'static str, size: usize, divisor: usize },
    #[error("backward requires a single-element output, got shape {0:?}")]
    NotScalar(Vec<usize>),
}

/// Failures of flow-domain primitives and flow file codecs.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("raster dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("validity mask has no valid pixels")]
    EmptyMask,
    #[error("flow component {value} at pixel ({x}, {y}) outside the KITTI range (-512, 512)")]
    OutOfRange { x: usize, y: usize, value: f32 },
    #[error("malformed flow data: {0}")]
    Malformed(String),
    #[error("non-finite flow value at pixel ({x}, {y})")]
    NonFinite { x: usize, y: usize },
}

/// Failures of the scene generator and split construction.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("degenerate scene: {0}")]
    Degenerate(String),
    #[error("canvas {width}x{height} not divisible by stride {stride}")]
    Indivisible { width: usize, height: usize, stride: usize },
    #[error("requested split sizes are invalid: {0}")]
    InvalidSizes(String),
    #[error("scene seed space exhausted")]
    SeedOverflow,
}

/// Errors of the model, losses, training loop and pseudo-labeling driver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error("training diverged in {phase} at step {step}")]
    Divergence { phase: String, step: usize },
    #[error("inference failed on pair {pair}: {source}")]
    Inference { pair: usize, source: TensorError },
    #[error("{0}")]
    Data(String),
    #[error("storage: {0}")]
    Store(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
