//! Central finite-difference checks for tape gradients.
//!
//! The numeric side only ever evaluates the forward function, so it stays
//! independent of every backward rule it is checking.

use super::{ParamId, ParamStore, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub step: f64,
    pub rel_tol: f64,
    /// Differences below this are accepted regardless of relative error.
    pub abs_tol: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            step: 1e-5,
            rel_tol: 1e-4,
            abs_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mismatch {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GradReport {
    pub checked: usize,
    /// Over coordinates whose gradient magnitude exceeds `abs_tol`.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub max_abs_grad: f64,
    pub mismatches: Vec<Mismatch>,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

impl GradCheck {
    pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
        let scale = analytic.abs().max(numeric.abs());
        if scale == 0.0 {
            0.0
        } else {
            (analytic - numeric).abs() / scale
        }
    }

    pub fn agrees(&self, analytic: f64, numeric: f64) -> bool {
        let diff = (analytic - numeric).abs();
        diff <= self.abs_tol || Self::rel_error(analytic, numeric) <= self.rel_tol
    }

    /// Central difference of `f` with respect to one coordinate of `x`.
    pub fn numeric(&self, x: &mut Tensor, index: usize, mut f: impl FnMut(&Tensor) -> f64) -> f64 {
        let orig = x.data()[index];
        x.data_mut()[index] = orig + self.step;
        let plus = f(x);
        x.data_mut()[index] = orig - self.step;
        let minus = f(x);
        x.data_mut()[index] = orig;
        (plus - minus) / (2.0 * self.step)
    }

    /// Compares analytic parameter gradients against central differences of `loss`.
    ///
    /// `coords_per_param` limits how many coordinates of each tensor are probed
    /// (evenly strided); `None` probes every coordinate.
    pub fn check_params(
        &self,
        store: &mut ParamStore,
        analytic: &[(ParamId, Tensor)],
        coords_per_param: Option<usize>,
        mut loss: impl FnMut(&ParamStore) -> f64,
    ) -> GradReport {
        let mut report = GradReport::default();
        let ids: Vec<ParamId> = store.ids().collect();
        for id in ids {
            let n = store.value(id).len();
            if n == 0 {
                continue;
            }
            let zero = Tensor::zeros(store.value(id).shape());
            let grad = analytic
                .iter()
                .find(|(pid, _)| *pid == id)
                .map_or(&zero, |(_, g)| g)
                .clone();
            let stride = coords_per_param.map_or(1, |k| (n / k.max(1)).max(1));
            for index in (0..n).step_by(stride) {
                let orig = store.value(id).data()[index];
                store.get_mut(id).value.data_mut()[index] = orig + self.step;
                let plus = loss(store);
                store.get_mut(id).value.data_mut()[index] = orig - self.step;
                let minus = loss(store);
                store.get_mut(id).value.data_mut()[index] = orig;
                let numeric = (plus - minus) / (2.0 * self.step);
                let a = grad.data()[index];
                report.checked += 1;
                report.max_abs_error = report.max_abs_error.max((a - numeric).abs());
                report.max_abs_grad = report.max_abs_grad.max(a.abs());
                if a.abs().max(numeric.abs()) > self.abs_tol {
                    report.max_rel_error = report.max_rel_error.max(Self::rel_error(a, numeric));
                }
                if !self.agrees(a, numeric) {
                    report.mismatches.push(Mismatch {
                        param: store.get(id).name.clone(),
                        index,
                        analytic: a,
                        numeric,
                    });
                }
            }
        }
        report
    }
}
