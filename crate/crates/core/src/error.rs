use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("{op}: output would be empty ({height}x{width})")]
    EmptyOutput {
        op: &'static str,
        height: isize,
        width: isize,
    },
    #[error("{op}: spatial dims must be even, got {height}x{width}")]
    OddDimensions {
        op: &'static str,
        height: usize,
        width: usize,
    },
    #[error("log of non-positive value {value} at index {index}")]
    Domain { index: usize, value: f64 },
    #[error("backward needs a rank-0 loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("variable is not recorded on this graph")]
    ForeignVar,
    #[error("backward already ran on this graph")]
    BackwardTwice,
    #[error("target is not one-hot at pixel {pixel} (class sum {sum})")]
    NotOneHot { pixel: usize, sum: f64 },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("missing gradient for parameter {0}")]
    MissingGradient(String),
    #[error("duplicate parameter name {0}")]
    DuplicateName(String),
    #[error("archive: {0}")]
    Archive(String),
    #[error("archive truncated: needed {needed} bytes at offset {offset}, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("strict load: {0}")]
    StrictLoad(String),
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },
}

pub(crate) fn shape_err(op: &'static str, detail: String) -> Error {
    Error::ShapeMismatch { op, detail }
}
