use std::collections::HashMap;

use super::{ParamId, ParamStore, Tensor, TensorError};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// An operation whose forward pass is computed outside the tape.
///
/// `backward` receives the input values, the recorded output and the upstream
/// gradient, and returns one optional gradient per input.
pub trait CustomOp {
    fn name(&self) -> &'static str;
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>>;
}

enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Affine(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    LogSumExp { x: Var, axis: usize },
    Concat { inputs: Vec<Var>, axis: usize },
    Stack { inputs: Vec<Var>, axis: usize },
    Narrow { x: Var, axis: usize, start: usize },
    MaxPool { x: Var, argmax: Vec<usize> },
    MaskedMaxPool { x: Var, argmax: Vec<Option<usize>> },
    Conv1d { x: Var, kernels: Var },
    Lookup { table: Var, ids: Vec<usize> },
    Gather { x: Var, indices: Vec<usize> },
    SelectRows { mask: Vec<bool>, on: Var, off: Var },
    Dropout { x: Var, mask: Tensor },
    Sum(Var),
    Reshape(Var),
    Custom { inputs: Vec<Var>, op: Box<dyn CustomOp> },
}

enum Value {
    Owned(Tensor),
    Param(ParamId),
}

struct Node {
    value: Value,
    op: Op,
    requires_grad: bool,
}

/// Define-by-run record of one forward computation.
///
/// Nodes are appended in evaluation order, so every node's inputs precede it.
pub struct Tape<'p> {
    store: Option<&'p ParamStore>,
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    param_vars: HashMap<ParamId, Var>,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

/// (outer, axis extent, inner) decomposition of a shape around `axis`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn is_scalar_shape(t: &Tensor) -> bool {
    t.is_scalar()
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Tape {
            store: None,
            nodes: Vec::new(),
            grads: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    /// A tape whose parameter leaves read from `store`.
    pub fn with_params(store: &'p ParamStore) -> Self {
        Tape {
            store: Some(store),
            ..Tape::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Param(id) => self
                .store
                .expect("parameter node without a store")
                .value(*id),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Accumulated gradient of the last backward passes with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Leaf bound to a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        assert!(self.store.is_some(), "tape has no parameter store");
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Param,
            requires_grad: true,
        });
        self.grads.push(None);
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    /// Gradients of every parameter reached by the tape.
    pub fn param_grads(&self) -> Vec<(ParamId, Tensor)> {
        let mut out: Vec<(ParamId, Tensor)> = self
            .param_vars
            .iter()
            .filter_map(|(&id, &v)| self.grads[v.0].clone().map(|g| (id, g)))
            .collect();
        out.sort_by_key(|(id, _)| *id);
        out
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[0] {
            return Err(TensorError::Dimension {
                op: "matmul",
                left: av.shape().to_vec(),
                right: bv.shape().to_vec(),
            });
        }
        let out = matmul_raw(av, bv);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() == bv.shape() {
            let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(av.shape(), data)
        } else if is_scalar_shape(bv) {
            let y = bv.item();
            Ok(av.map(|x| f(x, y)))
        } else if is_scalar_shape(av) {
            let x = av.item();
            Ok(bv.map(|y| f(x, y)))
        } else {
            Err(TensorError::Dimension {
                op: name,
                left: av.shape().to_vec(),
                right: bv.shape().to_vec(),
            })
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.binary("add", a, b, |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.binary("sub", a, b, |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.binary("mul", a, b, |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    /// Adds a vector of length `n` to every trailing row of `x[..., n]`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var, TensorError> {
        let (xv, bv) = (self.value(x), self.value(bias));
        let n = *xv.shape().last().unwrap_or(&0);
        if bv.rank() != 1 || bv.len() != n {
            return Err(TensorError::Dimension {
                op: "add_row",
                left: xv.shape().to_vec(),
                right: bv.shape().to_vec(),
            });
        }
        let mut out = xv.clone();
        if n > 0 {
            for chunk in out.data_mut().chunks_mut(n) {
                for (o, b) in chunk.iter_mut().zip(bv.data()) {
                    *o += b;
                }
            }
        }
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(out, Op::AddRow(x, bias), rg))
    }

    /// `scale * x + shift`, elementwise.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let out = self.value(x).map(|v| scale * v + shift);
        let rg = self.rg(x);
        self.push(out, Op::Affine(x, scale), rg)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        self.affine(x, factor, 0.0)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.affine(x, -1.0, 0.0)
    }

    /// `1 - x`.
    pub fn one_minus(&mut self, x: Var) -> Var {
        self.affine(x, -1.0, 1.0)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::tanh);
        let rg = self.rg(x);
        self.push(out, Op::Tanh(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        let rg = self.rg(x);
        self.push(out, Op::Sigmoid(x), rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| if v > 0.0 { v } else { 0.0 });
        let rg = self.rg(x);
        self.push(out, Op::Relu(x), rg)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::exp);
        let rg = self.rg(x);
        self.push(out, Op::Exp(x), rg)
    }

    pub fn log(&mut self, x: Var) -> Result<Var, TensorError> {
        let xv = self.value(x);
        if let Some(bad) = xv.data().iter().find(|&&v| !(v > 0.0)) {
            return Err(TensorError::Domain {
                op: "log",
                msg: format!("non-positive input {bad}"),
            });
        }
        let out = xv.map(f64::ln);
        let rg = self.rg(x);
        Ok(self.push(out, Op::Log(x), rg))
    }

    /// Max-shifted log-sum-exp reducing `axis`.
    pub fn logsumexp(&mut self, x: Var, axis: usize) -> Result<Var, TensorError> {
        let xv = self.value(x);
        if axis >= xv.rank() {
            return Err(TensorError::Index {
                op: "logsumexp",
                id: axis,
                bound: xv.rank(),
            });
        }
        let (outer, n, inner) = split_axis(xv.shape(), axis);
        if n == 0 {
            return Err(TensorError::Domain {
                op: "logsumexp",
                msg: "empty reduction axis".into(),
            });
        }
        let d = xv.data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| d[(o * n + k) * inner + i];
                let m = (0..n).map(at).fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = (0..n).map(|k| (at(k) - m).exp()).sum();
                out[o * inner + i] = m + s.ln();
            }
        }
        let mut shape = xv.shape().to_vec();
        shape.remove(axis);
        let out = Tensor::new(&shape, out)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::LogSumExp { x, axis }, rg))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, TensorError> {
        let first = self.value(inputs[0]).shape().to_vec();
        if axis >= first.len() {
            return Err(TensorError::Index {
                op: "concat",
                id: axis,
                bound: first.len(),
            });
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let agree = s.len() == first.len()
                && s.iter().zip(&first).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !agree {
                return Err(TensorError::Dimension {
                    op: "concat",
                    left: first.clone(),
                    right: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&first, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let t = self.value(v);
                let n = t.shape()[axis];
                data.extend_from_slice(&t.data()[o * n * inner..(o + 1) * n * inner]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        let out = Tensor::new(&shape, data)?;
        let rg = inputs.iter().any(|&v| self.rg(v));
        Ok(self.push(
            out,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            rg,
        ))
    }

    /// Stacks equally shaped tensors along a new axis.
    pub fn stack(&mut self, inputs: &[Var], axis: usize) -> Result<Var, TensorError> {
        let first = self.value(inputs[0]).shape().to_vec();
        if axis > first.len() {
            return Err(TensorError::Index {
                op: "stack",
                id: axis,
                bound: first.len() + 1,
            });
        }
        for &v in inputs {
            if self.shape(v) != first.as_slice() {
                return Err(TensorError::Dimension {
                    op: "stack",
                    left: first.clone(),
                    right: self.shape(v).to_vec(),
                });
            }
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis..].iter().product();
        let mut data = Vec::with_capacity(outer * inputs.len() * inner);
        for o in 0..outer {
            for &v in inputs {
                data.extend_from_slice(&self.value(v).data()[o * inner..(o + 1) * inner]);
            }
        }
        let mut shape = first;
        shape.insert(axis, inputs.len());
        let out = Tensor::new(&shape, data)?;
        let rg = inputs.iter().any(|&v| self.rg(v));
        Ok(self.push(
            out,
            Op::Stack {
                inputs: inputs.to_vec(),
                axis,
            },
            rg,
        ))
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var, TensorError> {
        let xv = self.value(x);
        if axis >= xv.rank() || start + len > xv.shape()[axis] {
            return Err(TensorError::Index {
                op: "narrow",
                id: start + len,
                bound: xv.shape().get(axis).copied().unwrap_or(0),
            });
        }
        let (outer, n, inner) = split_axis(xv.shape(), axis);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * n + start) * inner;
            data.extend_from_slice(&xv.data()[base..base + len * inner]);
        }
        let mut shape = xv.shape().to_vec();
        shape[axis] = len;
        let out = Tensor::new(&shape, data)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::Narrow { x, axis, start }, rg))
    }

    /// Index `index` along `axis`, dropping that axis.
    pub fn select(&mut self, x: Var, axis: usize, index: usize) -> Result<Var, TensorError> {
        let n = self.narrow(x, axis, index, 1)?;
        let mut shape = self.shape(n).to_vec();
        shape.remove(axis);
        self.reshape(n, &shape)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let out = self.value(x).clone().reshaped(shape)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::Reshape(x), rg))
    }

    /// Column-wise maximum of `x[T, d]`; ties resolve to the lowest row.
    pub fn max_pool(&mut self, x: Var) -> Result<(Var, Vec<usize>), TensorError> {
        let xv = self.value(x);
        if xv.rank() != 2 {
            return Err(TensorError::Dimension {
                op: "max_pool",
                left: xv.shape().to_vec(),
                right: vec![],
            });
        }
        let (t, d) = (xv.shape()[0], xv.shape()[1]);
        if t == 0 {
            return Err(TensorError::Domain {
                op: "max_pool",
                msg: "cannot pool over an empty axis".into(),
            });
        }
        let mut out = vec![0.0; d];
        let mut argmax = vec![0; d];
        for j in 0..d {
            let mut best = xv.data()[j];
            for i in 1..t {
                let v = xv.data()[i * d + j];
                if v > best {
                    best = v;
                    argmax[j] = i;
                }
            }
            out[j] = best;
        }
        let rg = self.rg(x);
        let var = self.push(
            Tensor::vector(out),
            Op::MaxPool {
                x,
                argmax: argmax.clone(),
            },
            rg,
        );
        Ok((var, argmax))
    }

    /// Per-item max over the first `lengths[n]` positions of `x[N, C, d]`.
    /// Items with length 0 pool to zero.
    pub fn masked_max_pool(&mut self, x: Var, lengths: &[usize]) -> Result<Var, TensorError> {
        let xv = self.value(x);
        if xv.rank() != 3 || xv.shape()[0] != lengths.len() {
            return Err(TensorError::Dimension {
                op: "masked_max_pool",
                left: xv.shape().to_vec(),
                right: vec![lengths.len()],
            });
        }
        let (n, c, d) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        let mut out = vec![0.0; n * d];
        let mut argmax = vec![None; n * d];
        for (item, &len) in lengths.iter().enumerate() {
            if len > c {
                return Err(TensorError::Index {
                    op: "masked_max_pool",
                    id: len,
                    bound: c,
                });
            }
            if len == 0 {
                continue;
            }
            for j in 0..d {
                let at = |p: usize| xv.data()[(item * c + p) * d + j];
                let mut best = at(0);
                let mut arg = 0;
                for p in 1..len {
                    if at(p) > best {
                        best = at(p);
                        arg = p;
                    }
                }
                out[item * d + j] = best;
                argmax[item * d + j] = Some(arg);
            }
        }
        let out = Tensor::new(&[n, d], out)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::MaskedMaxPool { x, argmax }, rg))
    }

    /// Same-padded 1-D convolution.
    ///
    /// `x` is `[T, d_in]` or `[B, T, d_in]`, `kernels` is `[w, d_in, d_out]` with odd `w`.
    pub fn conv1d(&mut self, x: Var, kernels: Var) -> Result<Var, TensorError> {
        let (xv, kv) = (self.value(x), self.value(kernels));
        if kv.rank() != 3 {
            return Err(TensorError::Dimension {
                op: "conv1d",
                left: xv.shape().to_vec(),
                right: kv.shape().to_vec(),
            });
        }
        let (w, din, dout) = (kv.shape()[0], kv.shape()[1], kv.shape()[2]);
        if w % 2 == 0 {
            return Err(TensorError::Config(format!(
                "convolution window must be odd, got {w}"
            )));
        }
        let (b, t) = match xv.shape() {
            [t, d] if *d == din => (1, *t),
            [b, t, d] if *d == din => (*b, *t),
            _ => {
                return Err(TensorError::Dimension {
                    op: "conv1d",
                    left: xv.shape().to_vec(),
                    right: kv.shape().to_vec(),
                })
            }
        };
        let pad = (w - 1) / 2;
        let (xd, kd) = (xv.data(), kv.data());
        let mut out = vec![0.0; b * t * dout];
        for bi in 0..b {
            for ti in 0..t {
                let o = &mut out[(bi * t + ti) * dout..(bi * t + ti + 1) * dout];
                for k in 0..w {
                    let src = ti + k;
                    if src < pad || src - pad >= t {
                        continue;
                    }
                    let xrow = &xd[(bi * t + src - pad) * din..(bi * t + src - pad + 1) * din];
                    for (i, &xi) in xrow.iter().enumerate() {
                        let krow = &kd[(k * din + i) * dout..(k * din + i + 1) * dout];
                        for (ov, &kw) in o.iter_mut().zip(krow) {
                            *ov += xi * kw;
                        }
                    }
                }
            }
        }
        let mut shape = xv.shape().to_vec();
        *shape.last_mut().unwrap() = dout;
        let out = Tensor::new(&shape, out)?;
        let rg = self.rg(x) || self.rg(kernels);
        Ok(self.push(out, Op::Conv1d { x, kernels }, rg))
    }

    /// Gathers rows of `table[V, d]`.
    pub fn lookup(&mut self, table: Var, ids: &[usize]) -> Result<Var, TensorError> {
        let tv = self.value(table);
        if tv.rank() != 2 {
            return Err(TensorError::Dimension {
                op: "lookup",
                left: tv.shape().to_vec(),
                right: vec![ids.len()],
            });
        }
        let (v, d) = (tv.shape()[0], tv.shape()[1]);
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(TensorError::Index {
                    op: "lookup",
                    id,
                    bound: v,
                });
            }
            data.extend_from_slice(tv.row(id));
        }
        let out = Tensor::new(&[ids.len(), d], data)?;
        let rg = self.rg(table);
        Ok(self.push(
            out,
            Op::Lookup {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    /// Picks flat elements of `x` into a vector.
    pub fn gather(&mut self, x: Var, indices: &[usize]) -> Result<Var, TensorError> {
        let xv = self.value(x);
        let mut data = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= xv.len() {
                return Err(TensorError::Index {
                    op: "gather",
                    id: i,
                    bound: xv.len(),
                });
            }
            data.push(xv.data()[i]);
        }
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::vector(data),
            Op::Gather {
                x,
                indices: indices.to_vec(),
            },
            rg,
        ))
    }

    /// Row-wise choice between `on` and `off` (both `[N, d]`).
    pub fn select_rows(&mut self, mask: &[bool], on: Var, off: Var) -> Result<Var, TensorError> {
        let (a, b) = (self.value(on), self.value(off));
        if a.shape() != b.shape() || a.rank() != 2 || a.shape()[0] != mask.len() {
            return Err(TensorError::Dimension {
                op: "select_rows",
                left: a.shape().to_vec(),
                right: b.shape().to_vec(),
            });
        }
        let d = a.shape()[1];
        let mut data = Vec::with_capacity(a.len());
        for (i, &m) in mask.iter().enumerate() {
            let src = if m { a } else { b };
            data.extend_from_slice(&src.data()[i * d..(i + 1) * d]);
        }
        let out = Tensor::new(a.shape(), data)?;
        let rg = self.rg(on) || self.rg(off);
        Ok(self.push(
            out,
            Op::SelectRows {
                mask: mask.to_vec(),
                on,
                off,
            },
            rg,
        ))
    }

    /// Multiplies by a precomputed inverted-dropout mask.
    pub fn dropout(&mut self, x: Var, mask: Tensor) -> Result<Var, TensorError> {
        let xv = self.value(x);
        if xv.shape() != mask.shape() {
            return Err(TensorError::Dimension {
                op: "dropout",
                left: xv.shape().to_vec(),
                right: mask.shape().to_vec(),
            });
        }
        let data = xv.data().iter().zip(mask.data()).map(|(a, m)| a * m).collect();
        let out = Tensor::new(xv.shape(), data)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::Dropout { x, mask }, rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    /// Records an externally computed result with its own backward rule.
    pub fn custom(&mut self, inputs: &[Var], output: Tensor, op: Box<dyn CustomOp>) -> Var {
        let rg = inputs.iter().any(|&v| self.rg(v));
        self.push(
            output,
            Op::Custom {
                inputs: inputs.to_vec(),
                op,
            },
            rg,
        )
    }

    /// Reverse sweep from a scalar root. Gradients add onto those of earlier calls.
    pub fn backward(&mut self, root: Var) -> Result<(), TensorError> {
        if self.value(root).len() != 1 {
            return Err(TensorError::Contract(format!(
                "backward requires a scalar root, got shape {:?}",
                self.shape(root)
            )));
        }
        let mut local: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        local[root.0] = Some(Tensor::full(self.shape(root), 1.0));
        for idx in (0..=root.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = local[idx].take() else { continue };
            for (input, gi) in self.backward_node(idx, &g) {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                match &mut local[input.0] {
                    Some(acc) => acc.add_assign(&gi),
                    slot => *slot = Some(gi),
                }
            }
            match &mut self.grads[idx] {
                Some(acc) => acc.add_assign(&g),
                slot => *slot = Some(g),
            }
        }
        Ok(())
    }

    fn backward_node(&self, idx: usize, g: &Tensor) -> Vec<(Var, Tensor)> {
        let node = &self.nodes[idx];
        let out = match &node.value {
            Value::Owned(t) => t,
            Value::Param(_) => return Vec::new(),
        };
        match &node.op {
            Op::Leaf | Op::Param => Vec::new(),
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let mut res = Vec::new();
                if self.rg(*a) {
                    res.push((*a, matmul_bt(g, bv)));
                }
                if self.rg(*b) {
                    res.push((*b, matmul_at(av, g)));
                }
                res
            }
            Op::Add(a, b) => vec![
                (*a, reduce_like(g, self.value(*a))),
                (*b, reduce_like(g, self.value(*b))),
            ],
            Op::Sub(a, b) => vec![
                (*a, reduce_like(g, self.value(*a))),
                (*b, reduce_like(&g.map(|v| -v), self.value(*b))),
            ],
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let ga = broadcast_mul(g, bv);
                let gb = broadcast_mul(g, av);
                vec![(*a, reduce_like(&ga, av)), (*b, reduce_like(&gb, bv))]
            }
            Op::AddRow(x, bias) => {
                let n = self.value(*bias).len();
                let mut gb = vec![0.0; n];
                if n > 0 {
                    for chunk in g.data().chunks(n) {
                        for (acc, v) in gb.iter_mut().zip(chunk) {
                            *acc += v;
                        }
                    }
                }
                vec![(*x, g.clone()), (*bias, Tensor::vector(gb))]
            }
            Op::Affine(x, scale) => vec![(*x, g.map(|v| v * scale))],
            Op::Tanh(x) => vec![(*x, zip_map(g, out, |gv, y| gv * (1.0 - y * y)))],
            Op::Sigmoid(x) => vec![(*x, zip_map(g, out, |gv, y| gv * y * (1.0 - y)))],
            Op::Relu(x) => vec![(*x, zip_map(g, out, |gv, y| if y > 0.0 { gv } else { 0.0 }))],
            Op::Exp(x) => vec![(*x, zip_map(g, out, |gv, y| gv * y))],
            Op::Log(x) => vec![(*x, zip_map(g, self.value(*x), |gv, v| gv / v))],
            Op::LogSumExp { x, axis } => {
                let xv = self.value(*x);
                let (outer, n, inner) = split_axis(xv.shape(), *axis);
                let mut gx = Tensor::zeros(xv.shape());
                let (xd, od, gd) = (xv.data(), out.data(), g.data());
                let gxd = gx.data_mut();
                for o in 0..outer {
                    for i in 0..inner {
                        let r = o * inner + i;
                        for k in 0..n {
                            let at = (o * n + k) * inner + i;
                            gxd[at] = gd[r] * (xd[at] - od[r]).exp();
                        }
                    }
                }
                vec![(*x, gx)]
            }
            Op::Concat { inputs, axis } => {
                let shape = out.shape();
                let (outer, total, inner) = split_axis(shape, *axis);
                let mut res = Vec::with_capacity(inputs.len());
                let mut offset = 0;
                for &v in inputs {
                    let vs = self.shape(v);
                    let n = vs[*axis];
                    let mut gv = Vec::with_capacity(outer * n * inner);
                    for o in 0..outer {
                        let base = (o * total + offset) * inner;
                        gv.extend_from_slice(&g.data()[base..base + n * inner]);
                    }
                    offset += n;
                    res.push((v, Tensor::new(vs, gv).expect("concat grad shape")));
                }
                res
            }
            Op::Stack { inputs, axis } => {
                let shape = out.shape();
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[*axis + 1..].iter().product();
                let k = inputs.len();
                inputs
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| {
                        let mut gv = Vec::with_capacity(outer * inner);
                        for o in 0..outer {
                            let base = (o * k + j) * inner;
                            gv.extend_from_slice(&g.data()[base..base + inner]);
                        }
                        (v, Tensor::new(self.shape(v), gv).expect("stack grad shape"))
                    })
                    .collect()
            }
            Op::Narrow { x, axis, start } => {
                let xs = self.shape(*x);
                let (outer, n, inner) = split_axis(xs, *axis);
                let len = out.shape()[*axis];
                let mut gx = Tensor::zeros(xs);
                let gxd = gx.data_mut();
                for o in 0..outer {
                    let dst = (o * n + start) * inner;
                    let src = o * len * inner;
                    gxd[dst..dst + len * inner].copy_from_slice(&g.data()[src..src + len * inner]);
                }
                vec![(*x, gx)]
            }
            Op::Reshape(x) => vec![(
                *x,
                g.clone().reshaped(self.shape(*x)).expect("reshape grad shape"),
            )],
            Op::MaxPool { x, argmax } => {
                let xs = self.shape(*x);
                let d = xs[1];
                let mut gx = Tensor::zeros(xs);
                for (j, &i) in argmax.iter().enumerate() {
                    gx.data_mut()[i * d + j] += g.data()[j];
                }
                vec![(*x, gx)]
            }
            Op::MaskedMaxPool { x, argmax } => {
                let xs = self.shape(*x);
                let (c, d) = (xs[1], xs[2]);
                let mut gx = Tensor::zeros(xs);
                for (flat, arg) in argmax.iter().enumerate() {
                    if let Some(p) = arg {
                        let (item, j) = (flat / d, flat % d);
                        gx.data_mut()[(item * c + p) * d + j] += g.data()[flat];
                    }
                }
                vec![(*x, gx)]
            }
            Op::Conv1d { x, kernels } => {
                let (xv, kv) = (self.value(*x), self.value(*kernels));
                let (w, din, dout) = (kv.shape()[0], kv.shape()[1], kv.shape()[2]);
                let (b, t) = if xv.rank() == 2 {
                    (1, xv.shape()[0])
                } else {
                    (xv.shape()[0], xv.shape()[1])
                };
                let pad = (w - 1) / 2;
                let mut gx = Tensor::zeros(xv.shape());
                let mut gk = Tensor::zeros(kv.shape());
                let (xd, kd, gd) = (xv.data(), kv.data(), g.data());
                {
                    let gxd = gx.data_mut();
                    let gkd = gk.data_mut();
                    for bi in 0..b {
                        for ti in 0..t {
                            let grow = &gd[(bi * t + ti) * dout..(bi * t + ti + 1) * dout];
                            for k in 0..w {
                                let src = ti + k;
                                if src < pad || src - pad >= t {
                                    continue;
                                }
                                let xbase = (bi * t + src - pad) * din;
                                for i in 0..din {
                                    let kbase = (k * din + i) * dout;
                                    let xi = xd[xbase + i];
                                    let mut acc = 0.0;
                                    for o in 0..dout {
                                        acc += grow[o] * kd[kbase + o];
                                        gkd[kbase + o] += xi * grow[o];
                                    }
                                    gxd[xbase + i] += acc;
                                }
                            }
                        }
                    }
                }
                vec![(*x, gx), (*kernels, gk)]
            }
            Op::Lookup { table, ids } => {
                let ts = self.shape(*table);
                let d = ts[1];
                let mut gt = Tensor::zeros(ts);
                for (row, &id) in ids.iter().enumerate() {
                    let dst = &mut gt.data_mut()[id * d..(id + 1) * d];
                    for (a, v) in dst.iter_mut().zip(&g.data()[row * d..(row + 1) * d]) {
                        *a += v;
                    }
                }
                vec![(*table, gt)]
            }
            Op::Gather { x, indices } => {
                let mut gx = Tensor::zeros(self.shape(*x));
                for (k, &i) in indices.iter().enumerate() {
                    gx.data_mut()[i] += g.data()[k];
                }
                vec![(*x, gx)]
            }
            Op::SelectRows { mask, on, off } => {
                let shape = out.shape();
                let d = shape[1];
                let mut ga = Tensor::zeros(shape);
                let mut gb = Tensor::zeros(shape);
                for (i, &m) in mask.iter().enumerate() {
                    let dst = if m { &mut ga } else { &mut gb };
                    dst.data_mut()[i * d..(i + 1) * d].copy_from_slice(&g.data()[i * d..(i + 1) * d]);
                }
                vec![(*on, ga), (*off, gb)]
            }
            Op::Dropout { x, mask } => vec![(*x, zip_map(g, mask, |gv, m| gv * m))],
            Op::Sum(x) => vec![(*x, Tensor::full(self.shape(*x), g.item()))],
            Op::Custom { inputs, op } => {
                let values: Vec<&Tensor> = inputs.iter().map(|&v| self.value(v)).collect();
                op.backward(&values, out, g)
                    .into_iter()
                    .zip(inputs)
                    .filter_map(|(gi, &v)| gi.map(|t| (v, t)))
                    .collect()
            }
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape(), data).expect("zip_map shape")
}

/// `g * other`, where `other` may be a broadcast scalar.
fn broadcast_mul(g: &Tensor, other: &Tensor) -> Tensor {
    if other.shape() == g.shape() {
        zip_map(g, other, |a, b| a * b)
    } else {
        let s = other.item();
        g.map(|a| a * s)
    }
}

/// Sums `g` down to `like`'s shape when `like` was scalar-broadcast.
fn reduce_like(g: &Tensor, like: &Tensor) -> Tensor {
    if g.shape() == like.shape() {
        g.clone()
    } else {
        Tensor::new(like.shape(), vec![g.sum()]).expect("scalar grad shape")
    }
}

pub(crate) fn matmul_raw(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = vec![0.0; m * n];
    let (ad, bd) = (a.data(), b.data());
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = ad[i * k + p];
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in orow.iter_mut().zip(&bd[p * n..(p + 1) * n]) {
                *o += av * bv;
            }
        }
    }
    Tensor::new(&[m, n], out).expect("matmul shape")
}

/// `g · bᵀ`
fn matmul_bt(g: &Tensor, b: &Tensor) -> Tensor {
    let (m, n, k) = (g.shape()[0], g.shape()[1], b.shape()[0]);
    let mut out = vec![0.0; m * k];
    let (gd, bd) = (g.data(), b.data());
    for i in 0..m {
        let grow = &gd[i * n..(i + 1) * n];
        for p in 0..k {
            out[i * k + p] = grow.iter().zip(&bd[p * n..(p + 1) * n]).map(|(x, y)| x * y).sum();
        }
    }
    Tensor::new(&[m, k], out).expect("matmul grad shape")
}

/// `aᵀ · g`
fn matmul_at(a: &Tensor, g: &Tensor) -> Tensor {
    let (m, k, n) = (a.shape()[0], a.shape()[1], g.shape()[1]);
    let mut out = vec![0.0; k * n];
    let (ad, gd) = (a.data(), g.data());
    for i in 0..m {
        let grow = &gd[i * n..(i + 1) * n];
        for p in 0..k {
            let av = ad[i * k + p];
            if av == 0.0 {
                continue;
            }
            for (o, &gv) in out[p * n..(p + 1) * n].iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
    Tensor::new(&[k, n], out).expect("matmul grad shape")
}
