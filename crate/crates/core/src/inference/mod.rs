//! Label scoring, losses, and decoding.

mod crf;
mod softmax;

pub use crf::{apply_guards, crf_nll, lattice_from_tape, path_score, Lattice, ScoredPath, IMPOSSIBLE};
pub use softmax::{argmax_rows, softmax_loss, Reduction};

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::nn::Linear;

/// Per-position affine map `[B, L, H] → [B, L, K]`.
pub fn project(tape: &mut Tape, layer: &Linear, hidden: Var) -> Result<Var> {
    let shape = tape.shape(hidden).to_vec();
    let rows: usize = shape[..shape.len() - 1].iter().product();
    let flat = tape.reshape(hidden, &[rows, layer.in_dim])?;
    let out = layer.forward(tape, flat)?;
    let mut out_shape = shape[..shape.len() - 1].to_vec();
    out_shape.push(layer.out_dim);
    Ok(tape.reshape(out, &out_shape)?)
}
