use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::inference::{path_score, Lattice};

pub const MAX_PATHS: usize = 100_000;

/// Every label path of one sentence with its score.
#[derive(Debug, Clone)]
pub struct Enumeration {
    /// Sorted by score descending, ties in lexicographic label order.
    pub paths: Vec<(Vec<usize>, f64)>,
    pub log_z: f64,
}

impl Enumeration {
    pub fn top(&self, n: usize) -> &[(Vec<usize>, f64)] {
        &self.paths[..n.min(self.paths.len())]
    }

    pub fn best(&self) -> &(Vec<usize>, f64) {
        &self.paths[0]
    }

    pub fn prob(&self, score: f64) -> f64 {
        (score - self.log_z).exp()
    }
}

/// Exhaustive oracle for sentence `b` of `lattice`.
///
/// `logZ` sums `exp(score − max)` with Neumaier compensation.
pub fn enumerate_paths(lattice: &Lattice, b: usize) -> Result<Enumeration> {
    let k = lattice.num_labels;
    let len = lattice.length(b);
    let total = (k as u128).checked_pow(len as u32).unwrap_or(u128::MAX);
    if total > MAX_PATHS as u128 {
        return Err(Error::Contract(format!(
            "{k}^{len} paths exceeds the enumeration bound of {MAX_PATHS}"
        )));
    }
    if len == 0 {
        return Err(Error::Domain(format!("sentence {b} has length 0")));
    }
    let em = lattice.sentence(b);
    let mut paths = Vec::with_capacity(total as usize);
    let mut labels = vec![0usize; len];
    loop {
        paths.push((labels.clone(), path_score(em, k, &lattice.transitions, &labels)));
        let mut pos = len;
        loop {
            if pos == 0 {
                let log_z = compensated_log_sum_exp(paths.iter().map(|p| p.1));
                paths.sort_by(|a, b| {
                    b.1.partial_cmp(&a.1)
                        .unwrap_or(Ordering::Equal)
                        .then_with(|| a.0.cmp(&b.0))
                });
                return Ok(Enumeration { paths, log_z });
            }
            pos -= 1;
            labels[pos] += 1;
            if labels[pos] < k {
                break;
            }
            labels[pos] = 0;
        }
    }
}

pub fn compensated_log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for x in xs {
        let v = (x - m).exp();
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    m + (sum + comp).ln()
}
