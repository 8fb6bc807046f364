//! Network building blocks assembled from the autodiff tape.

mod char_layer;
mod cnn;
mod rnn;
mod word_layer;

pub use char_layer::CharEncoder;
pub use cnn::ConvStack;
pub use rnn::{BiRnn, RnnKind, RnnOutput};
pub use word_layer::{WordEncoder, WordRepresentation};

use rand::Rng;

use crate::autodiff::{MaskSource, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::Result;

/// Tape plus the train/eval switch threaded through a forward pass.
pub struct Forward<'t, 'p> {
    pub tape: &'t mut Tape<'p>,
    masks: Option<&'t mut dyn MaskSource>,
    dropout: f64,
}

impl<'t, 'p> Forward<'t, 'p> {
    /// Evaluation mode: dropout is the identity.
    pub fn eval(tape: &'t mut Tape<'p>) -> Self {
        Forward {
            tape,
            masks: None,
            dropout: 0.0,
        }
    }

    pub fn train(tape: &'t mut Tape<'p>, masks: &'t mut dyn MaskSource, dropout: f64) -> Self {
        Forward {
            tape,
            masks: Some(masks),
            dropout,
        }
    }

    pub fn is_training(&self) -> bool {
        self.masks.is_some()
    }

    pub fn dropout(&mut self, x: Var) -> Result<Var> {
        match self.masks.as_deref_mut() {
            Some(masks) if self.dropout > 0.0 => {
                let mask = masks.mask(self.tape.shape(x), self.dropout);
                Ok(self.tape.dropout(x, mask)?)
            }
            _ => Ok(x),
        }
    }

    /// Zeroes the rows of `x[N, d]` whose mask entry is false.
    pub fn zero_rows(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        if mask.iter().all(|&m| m) {
            return Ok(x);
        }
        let zeros = self.tape.constant(Tensor::zeros(self.tape.shape(x)));
        Ok(self.tape.select_rows(mask, x, zeros)?)
    }
}

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub fn xavier(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-bound..bound)).collect()).expect("init shape")
}

/// Affine map `x·W + b` over the last axis.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        Linear {
            weight: store.add(
                format!("{name}.weight"),
                xavier(&[in_dim, out_dim], in_dim, out_dim, rng),
            ),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[out_dim])),
            in_dim,
            out_dim,
        }
    }

    /// `x` is `[N, in_dim]`.
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let w = tape.param(self.weight);
        let b = tape.param(self.bias);
        let h = tape.matmul(x, w)?;
        Ok(tape.add_row(h, b)?)
    }
}

/// Splits a flat `[rows, cols]` row-major mask into column `t` of each row.
pub(crate) fn mask_column(mask: &[bool], cols: usize, t: usize) -> Vec<bool> {
    mask.chunks(cols).map(|row| row[t]).collect()
}

/// `[N, T]` mask from lengths.
pub(crate) fn length_mask(lengths: &[usize], t: usize) -> Vec<bool> {
    lengths
        .iter()
        .flat_map(|&len| (0..t).map(move |i| i < len))
        .collect()
}
