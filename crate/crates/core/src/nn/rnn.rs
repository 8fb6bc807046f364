use rand::Rng;

use super::{mask_column, xavier, Forward};
use crate::autodiff::{ParamId, ParamStore, Tensor, Var};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RnnKind {
    Lstm,
    Gru,
}

impl RnnKind {
    fn gates(self) -> usize {
        match self {
            RnnKind::Lstm => 4,
            RnnKind::Gru => 3,
        }
    }
}

/// One recurrent direction.
///
/// LSTM gate order is input, forget, cell, output. GRU gate order is reset,
/// update, candidate; the candidate uses `r ⊙ (h·W_hn + b_hn)`.
#[derive(Debug, Clone)]
pub struct Cell {
    pub kind: RnnKind,
    pub hidden: usize,
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b_ih: ParamId,
    pub b_hh: Option<ParamId>,
}

impl Cell {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        kind: RnnKind,
        input: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let g = kind.gates() * hidden;
        Cell {
            kind,
            hidden,
            w_ih: store.add(format!("{name}.w_ih"), xavier(&[input, g], input, g, rng)),
            w_hh: store.add(format!("{name}.w_hh"), xavier(&[hidden, g], hidden, g, rng)),
            b_ih: store.add(format!("{name}.b_ih"), Tensor::zeros(&[g])),
            b_hh: (kind == RnnKind::Gru)
                .then(|| store.add(format!("{name}.b_hh"), Tensor::zeros(&[g]))),
        }
    }

    /// Runs over `x[N, T, d]` in one direction.
    ///
    /// Rows whose mask is false at a step keep their previous state, so a
    /// reverse pass starts from zeros at each row's last real position.
    /// Returns per-step outputs (zero where masked) and the final state.
    fn run(&self, f: &mut Forward, x: Var, mask: &[bool], reverse: bool) -> Result<(Vec<Var>, Var)> {
        let shape = f.tape.shape(x).to_vec();
        let (n, t, d) = (shape[0], shape[1], shape[2]);
        let h = self.hidden;
        let g = self.kind.gates() * h;

        let w_ih = f.tape.param(self.w_ih);
        let w_hh = f.tape.param(self.w_hh);
        let b_ih = f.tape.param(self.b_ih);
        let flat = f.tape.reshape(x, &[n * t, d])?;
        let proj = f.tape.matmul(flat, w_ih)?;
        let proj = f.tape.add_row(proj, b_ih)?;
        let proj = f.tape.reshape(proj, &[n, t, g])?;

        let zeros = f.tape.constant(Tensor::zeros(&[n, h]));
        let mut state_h = zeros;
        let mut state_c = zeros;
        let mut outputs = vec![zeros; t];
        let steps: Vec<usize> = if reverse {
            (0..t).rev().collect()
        } else {
            (0..t).collect()
        };
        for step in steps {
            let active = mask_column(mask, t, step);
            if !active.iter().any(|&a| a) {
                continue;
            }
            let xp = f.tape.select(proj, 1, step)?;
            let hp = f.tape.matmul(state_h, w_hh)?;
            let (new_h, new_c) = match self.kind {
                RnnKind::Lstm => {
                    let gates = f.tape.add(xp, hp)?;
                    let i = f.tape.narrow(gates, 1, 0, h)?;
                    let i = f.tape.sigmoid(i);
                    let fg = f.tape.narrow(gates, 1, h, h)?;
                    let fg = f.tape.sigmoid(fg);
                    let c_in = f.tape.narrow(gates, 1, 2 * h, h)?;
                    let c_in = f.tape.tanh(c_in);
                    let o = f.tape.narrow(gates, 1, 3 * h, h)?;
                    let o = f.tape.sigmoid(o);
                    let keep = f.tape.mul(fg, state_c)?;
                    let write = f.tape.mul(i, c_in)?;
                    let c = f.tape.add(keep, write)?;
                    let tc = f.tape.tanh(c);
                    (f.tape.mul(o, tc)?, Some(c))
                }
                RnnKind::Gru => {
                    let b_hh = f.tape.param(self.b_hh.expect("GRU hidden bias"));
                    let hp = f.tape.add_row(hp, b_hh)?;
                    let xr = f.tape.narrow(xp, 1, 0, 2 * h)?;
                    let hr = f.tape.narrow(hp, 1, 0, 2 * h)?;
                    let rz = f.tape.add(xr, hr)?;
                    let rz = f.tape.sigmoid(rz);
                    let r = f.tape.narrow(rz, 1, 0, h)?;
                    let z = f.tape.narrow(rz, 1, h, h)?;
                    let xn = f.tape.narrow(xp, 1, 2 * h, h)?;
                    let hn = f.tape.narrow(hp, 1, 2 * h, h)?;
                    let rh = f.tape.mul(r, hn)?;
                    let cand = f.tape.add(xn, rh)?;
                    let cand = f.tape.tanh(cand);
                    let one_minus_z = f.tape.one_minus(z);
                    let a = f.tape.mul(one_minus_z, cand)?;
                    let b = f.tape.mul(z, state_h)?;
                    (f.tape.add(a, b)?, None)
                }
            };
            state_h = f.tape.select_rows(&active, new_h, state_h)?;
            if let Some(c) = new_c {
                state_c = f.tape.select_rows(&active, c, state_c)?;
            }
            outputs[step] = f.tape.select_rows(&active, new_h, zeros)?;
        }
        Ok((outputs, state_h))
    }
}

/// Bidirectional recurrent layer; each direction has `hidden` units.
#[derive(Debug, Clone)]
pub struct BiRnn {
    pub forward: Cell,
    pub backward: Cell,
}

pub struct RnnOutput {
    /// `[N, T, 2 * hidden]`, zero at masked positions.
    pub sequence: Var,
    /// `[N, 2 * hidden]`: forward state after the last real step, backward state at step 0.
    pub final_state: Var,
}

impl BiRnn {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        kind: RnnKind,
        input: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        BiRnn {
            forward: Cell::new(store, &format!("{name}.fwd"), kind, input, hidden, rng),
            backward: Cell::new(store, &format!("{name}.bwd"), kind, input, hidden, rng),
        }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.forward.hidden
    }

    /// `x` is `[N, T, d]`; `mask` is the flat `[N, T]` validity mask with leading trues.
    pub fn run(&self, f: &mut Forward, x: Var, mask: &[bool]) -> Result<RnnOutput> {
        let (fo, fh) = self.forward.run(f, x, mask, false)?;
        let (bo, bh) = self.backward.run(f, x, mask, true)?;
        let fs = f.tape.stack(&fo, 1)?;
        let bs = f.tape.stack(&bo, 1)?;
        Ok(RnnOutput {
            sequence: f.tape.concat(&[fs, bs], 2)?,
            final_state: f.tape.concat(&[fh, bh], 1)?,
        })
    }
}
