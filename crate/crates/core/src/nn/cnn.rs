use rand::Rng;

use super::{xavier, Forward};
use crate::autodiff::{ParamId, ParamStore, Tensor, Var};
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct ConvLayer {
    pub kernels: ParamId,
    pub bias: ParamId,
}

impl ConvLayer {
    pub fn new(store: &mut ParamStore, name: &str, window: usize, input: usize, output: usize, rng: &mut impl Rng) -> Self {
        ConvLayer {
            kernels: store.add(
                format!("{name}.kernels"),
                xavier(&[window, input, output], window * input, output, rng),
            ),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[output])),
        }
    }

    /// conv1d + bias + relu on `x[N, T, d]`.
    pub fn forward(&self, f: &mut Forward, x: Var) -> Result<Var> {
        let k = f.tape.param(self.kernels);
        let b = f.tape.param(self.bias);
        let y = f.tape.conv1d(x, k)?;
        let y = f.tape.add_row(y, b)?;
        Ok(f.tape.relu(y))
    }
}

/// Stacked same-padded convolutions over a masked sequence batch.
#[derive(Debug, Clone)]
pub struct ConvStack {
    pub layers: Vec<ConvLayer>,
    pub output_dim: usize,
}

impl ConvStack {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        layers: usize,
        window: usize,
        input: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let layers = (0..layers)
            .map(|i| {
                let d_in = if i == 0 { input } else { hidden };
                ConvLayer::new(store, &format!("{name}.{i}"), window, d_in, hidden, rng)
            })
            .collect();
        ConvStack {
            layers,
            output_dim: hidden,
        }
    }

    /// `x` is `[B, L, d]`; masked positions are zeroed after every layer.
    pub fn forward(&self, f: &mut Forward, x: Var, mask: &[bool]) -> Result<Var> {
        let shape = f.tape.shape(x).to_vec();
        let (b, l) = (shape[0], shape[1]);
        let mut h = x;
        for layer in &self.layers {
            let y = layer.forward(f, h)?;
            let y = f.dropout(y)?;
            let flat = f.tape.reshape(y, &[b * l, self.output_dim])?;
            let flat = f.zero_rows(flat, mask)?;
            h = f.tape.reshape(flat, &[b, l, self.output_dim])?;
        }
        Ok(h)
    }
}
