//! Dense `f64` tensors and a define-by-run reverse-mode tape.
//!
//! A [`Tape`] is built fresh for every forward pass. Learned parameters live
//! in a [`ParamStore`] that the tape borrows read-only; after
//! [`Tape::backward`] the caller pulls parameter gradients out with
//! [`Tape::param_grads`] and folds them into the store.

mod dropout;
pub mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use dropout::{BernoulliMasks, FixedMasks, MaskSource, NoMasks};
pub use params::{Param, ParamId, ParamStore};
pub use tape::{CustomOp, Tape, Var};
pub use gradcheck::{GradCheck, GradReport};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: {msg}")]
    Domain { op: &'static str, msg: String },
    #[error("{op}: index {id} out of range for extent {bound}")]
    Index {
        op: &'static str,
        id: usize,
        bound: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
}
