use crate::autodiff::{ParamStore, Tensor};
use crate::config::OptimizerKind;
use crate::error::{Error, Result};

const ADAGRAD_EPS: f64 = 1e-10;
const ADADELTA_RHO: f64 = 0.9;
const ADADELTA_EPS: f64 = 1e-6;
const RMSPROP_ALPHA: f64 = 0.99;
const RMSPROP_EPS: f64 = 1e-8;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// `lr0 / (1 + decay · epoch)`.
pub fn decayed_lr(lr0: f64, lr_decay: f64, epoch: usize) -> f64 {
    lr0 / (1.0 + lr_decay * epoch as f64)
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub momentum: f64,
    pub l2: f64,
    pub steps: u64,
    /// Per parameter: momentum / AdaGrad sum / AdaDelta E[g²] / RMSProp mean / Adam first moment.
    first: Vec<Tensor>,
    /// Per parameter: AdaDelta E[Δ²] / Adam second moment.
    second: Vec<Tensor>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, momentum: f64, l2: f64, store: &ParamStore) -> Self {
        let zeros = || store.iter().map(|(_, p)| Tensor::zeros(p.value.shape())).collect();
        Optimizer {
            kind,
            momentum,
            l2,
            steps: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    /// Learning rate for `epoch`; only SGD decays.
    pub fn epoch_lr(&self, lr0: f64, lr_decay: f64, epoch: usize) -> f64 {
        match self.kind {
            OptimizerKind::Sgd => decayed_lr(lr0, lr_decay, epoch),
            _ => lr0,
        }
    }

    /// Applies one update from the stored gradients, then clears them.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) -> Result<()> {
        if store.len() != self.first.len() {
            return Err(Error::Contract(format!(
                "optimizer tracks {} parameters but the store has {}",
                self.first.len(),
                store.len()
            )));
        }
        self.steps += 1;
        let t = self.steps as i32;
        for (i, p) in store.iter_mut().enumerate() {
            if p.grad.shape() != p.value.shape() {
                return Err(Error::Contract(format!("parameter {} has no matching gradient", p.name)));
            }
            let a = self.first[i].data_mut();
            let b = self.second[i].data_mut();
            let values = p.value.data_mut();
            for (j, (w, &g0)) in values.iter_mut().zip(p.grad.data()).enumerate() {
                let g = g0 + self.l2 * *w;
                match self.kind {
                    OptimizerKind::Sgd => {
                        if self.momentum > 0.0 {
                            a[j] = self.momentum * a[j] + g;
                            *w -= lr * a[j];
                        } else {
                            *w -= lr * g;
                        }
                    }
                    OptimizerKind::AdaGrad => {
                        a[j] += g * g;
                        *w -= lr * g / (a[j].sqrt() + ADAGRAD_EPS);
                    }
                    OptimizerKind::AdaDelta => {
                        a[j] = ADADELTA_RHO * a[j] + (1.0 - ADADELTA_RHO) * g * g;
                        let delta = (b[j] + ADADELTA_EPS).sqrt() / (a[j] + ADADELTA_EPS).sqrt() * g;
                        b[j] = ADADELTA_RHO * b[j] + (1.0 - ADADELTA_RHO) * delta * delta;
                        *w -= lr * delta;
                    }
                    OptimizerKind::RmsProp => {
                        a[j] = RMSPROP_ALPHA * a[j] + (1.0 - RMSPROP_ALPHA) * g * g;
                        *w -= lr * g / (a[j].sqrt() + RMSPROP_EPS);
                    }
                    OptimizerKind::Adam => {
                        a[j] = ADAM_BETA1 * a[j] + (1.0 - ADAM_BETA1) * g;
                        b[j] = ADAM_BETA2 * b[j] + (1.0 - ADAM_BETA2) * g * g;
                        let m = a[j] / (1.0 - ADAM_BETA1.powi(t));
                        let v = b[j] / (1.0 - ADAM_BETA2.powi(t));
                        *w -= lr * m / (v.sqrt() + ADAM_EPS);
                    }
                }
            }
        }
        store.zero_grad();
        Ok(())
    }
}

/// Rescales all gradients so their global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(store: &mut ParamStore, max_norm: f64) -> f64 {
    let norm = store.grad_norm();
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        for p in store.iter_mut() {
            p.grad.data_mut().iter_mut().for_each(|g| *g *= s);
        }
    }
    norm
}
