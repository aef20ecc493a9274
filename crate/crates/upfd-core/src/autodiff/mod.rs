//! Minimal differentiable numerical core: dense f64 tensors, layer
//! primitives with hand-derived backward passes, the softmax
//! cross-entropy loss, and Adam/SGD parameter updates.

mod ops;
mod optim;
mod tensor;

pub use ops::{
    linear_backward, linear_forward, relu, relu_backward, softmax_cross_entropy,
};
pub use optim::{glorot_uniform, ParamStore};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("shape {shape:?} does not fit {len} data values")]
    ShapeDataMismatch { shape: Vec<usize>, len: usize },
    #[error("label {0} outside {{0,1}}")]
    BadLabel(usize),
    #[error("parameter {0} has no gradient accumulated")]
    MissingGradient(String),
    #[error("unknown parameter {0}")]
    UnknownParameter(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
}

pub type Result<T> = std::result::Result<T, AutodiffError>;
