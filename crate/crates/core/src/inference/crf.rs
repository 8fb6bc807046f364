use std::cmp::Ordering;

use crate::autodiff::{CustomOp, Tape, Tensor, TensorError, Var};
use crate::error::{Error, Result};

/// Finite stand-in for −∞ on forbidden boundary transitions.
pub const IMPOSSIBLE: f64 = -1e12;

/// Emission scores for a padded batch plus the shared transition table.
///
/// `transitions[from * (K + 2) + to]`; index `K` is START and `K + 1` is STOP.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    pub batch: usize,
    pub max_len: usize,
    pub num_labels: usize,
    pub emissions: Vec<f64>,
    pub mask: Vec<bool>,
    pub transitions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPath {
    pub labels: Vec<usize>,
    pub score: f64,
    /// `exp(score − logZ)`.
    pub prob: f64,
}

/// Writes the START/STOP guards into a `(K+2)²` table.
pub fn apply_guards(transitions: &mut [f64], k: usize) {
    let n = k + 2;
    for i in 0..n {
        transitions[i * n + k] = IMPOSSIBLE;
        transitions[(k + 1) * n + i] = IMPOSSIBLE;
    }
}

impl Lattice {
    /// Builds a lattice, applying the boundary guards to `transitions`.
    pub fn new(
        batch: usize,
        max_len: usize,
        num_labels: usize,
        emissions: Vec<f64>,
        mask: Vec<bool>,
        mut transitions: Vec<f64>,
    ) -> Result<Self> {
        let k = num_labels;
        if k == 0 {
            return Err(Error::Domain("lattice needs at least one label".into()));
        }
        if emissions.len() != batch * max_len * k || mask.len() != batch * max_len {
            return Err(TensorError::Dimension {
                op: "lattice",
                left: vec![batch, max_len, k],
                right: vec![emissions.len(), mask.len()],
            }
            .into());
        }
        if transitions.len() != (k + 2) * (k + 2) {
            return Err(TensorError::Dimension {
                op: "lattice",
                left: vec![k + 2, k + 2],
                right: vec![transitions.len()],
            }
            .into());
        }
        apply_guards(&mut transitions, k);
        Ok(Lattice {
            batch,
            max_len,
            num_labels,
            emissions,
            mask,
            transitions,
        })
    }

    /// One sentence with an `ℓ×K` emission matrix.
    pub fn single(num_labels: usize, emissions: Vec<f64>, transitions: Vec<f64>) -> Result<Self> {
        let len = emissions.len() / num_labels.max(1);
        Self::new(1, len, num_labels, emissions, vec![true; len], transitions)
    }

    pub fn length(&self, b: usize) -> usize {
        self.mask[b * self.max_len..(b + 1) * self.max_len]
            .iter()
            .take_while(|&&m| m)
            .count()
    }

    /// Emissions of sentence `b` over its real length, `ℓ×K` row-major.
    pub fn sentence(&self, b: usize) -> &[f64] {
        let k = self.num_labels;
        let start = b * self.max_len * k;
        &self.emissions[start..start + self.length(b) * k]
    }

    fn trans(&self, from: usize, to: usize) -> f64 {
        self.transitions[from * (self.num_labels + 2) + to]
    }

    pub fn path_score(&self, b: usize, labels: &[usize]) -> f64 {
        path_score(self.sentence(b), self.num_labels, &self.transitions, labels)
    }

    /// Log-partition of sentence `b`.
    pub fn log_partition(&self, b: usize) -> Result<f64> {
        let em = self.sentence(b);
        if em.is_empty() {
            return Err(Error::Domain(format!("sentence {b} has length 0")));
        }
        Ok(forward(em, self.num_labels, &self.transitions).0)
    }

    /// Summed NLL over the batch.
    pub fn nll(&self, gold: &[Vec<usize>]) -> Result<f64> {
        let mut total = 0.0;
        for b in 0..self.batch {
            total += self.log_partition(b)? - self.path_score(b, &gold[b]);
        }
        Ok(total)
    }

    pub fn viterbi(&self) -> Vec<ScoredPath> {
        (0..self.batch)
            .map(|b| self.nbest(b, 1).into_iter().next().unwrap_or(ScoredPath {
                labels: Vec::new(),
                score: 0.0,
                prob: 1.0,
            }))
            .collect()
    }

    /// Exact top-`n` paths of sentence `b`, score descending, ties lexicographic.
    pub fn nbest(&self, b: usize, n: usize) -> Vec<ScoredPath> {
        let em = self.sentence(b);
        if em.is_empty() || n == 0 {
            return Vec::new();
        }
        let log_z = forward(em, self.num_labels, &self.transitions).0;
        kbest(self, em, n)
            .into_iter()
            .map(|(labels, score)| ScoredPath {
                labels,
                score,
                prob: (score - log_z).exp(),
            })
            .collect()
    }
}

pub fn path_score(em: &[f64], k: usize, transitions: &[f64], labels: &[usize]) -> f64 {
    let n = k + 2;
    let mut prev = k;
    let mut s = 0.0;
    for (t, &y) in labels.iter().enumerate() {
        s = s + transitions[prev * n + y] + em[t * k + y];
        prev = y;
    }
    s + transitions[prev * n + k + 1]
}

fn log_add_all(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Forward recursion. Returns `(logZ, alpha)` with `alpha` as `ℓ×K`.
fn forward(em: &[f64], k: usize, tr: &[f64]) -> (f64, Vec<f64>) {
    let n = k + 2;
    let len = em.len() / k;
    let mut alpha = vec![0.0; len * k];
    for j in 0..k {
        alpha[j] = tr[k * n + j] + em[j];
    }
    for t in 1..len {
        for j in 0..k {
            let prev = &alpha[(t - 1) * k..t * k];
            alpha[t * k + j] = log_add_all((0..k).map(|i| prev[i] + tr[i * n + j])) + em[t * k + j];
        }
    }
    let last = &alpha[(len - 1) * k..];
    let log_z = log_add_all((0..k).map(|i| last[i] + tr[i * n + k + 1]));
    (log_z, alpha)
}

fn backward(em: &[f64], k: usize, tr: &[f64]) -> Vec<f64> {
    let n = k + 2;
    let len = em.len() / k;
    let mut beta = vec![0.0; len * k];
    for i in 0..k {
        beta[(len - 1) * k + i] = tr[i * n + k + 1];
    }
    for t in (0..len - 1).rev() {
        for i in 0..k {
            let next = &beta[(t + 1) * k..(t + 2) * k];
            beta[t * k + i] = log_add_all((0..k).map(|j| tr[i * n + j] + em[(t + 1) * k + j] + next[j]));
        }
    }
    beta
}

/// Gradients of `logZ − score(gold)` for one sentence, accumulated into
/// `d_em` (`ℓ×K`) and `d_tr` (`(K+2)²`) scaled by `g`.
fn nll_grad(em: &[f64], k: usize, tr: &[f64], gold: &[usize], g: f64, d_em: &mut [f64], d_tr: &mut [f64]) {
    let n = k + 2;
    let len = em.len() / k;
    let (log_z, alpha) = forward(em, k, tr);
    let beta = backward(em, k, tr);
    for t in 0..len {
        for j in 0..k {
            d_em[t * k + j] += g * (alpha[t * k + j] + beta[t * k + j] - log_z).exp();
        }
    }
    for j in 0..k {
        d_tr[k * n + j] += g * (tr[k * n + j] + em[j] + beta[j] - log_z).exp();
        d_tr[j * n + k + 1] += g * (alpha[(len - 1) * k + j] + tr[j * n + k + 1] - log_z).exp();
    }
    for t in 1..len {
        for i in 0..k {
            for j in 0..k {
                let lp = alpha[(t - 1) * k + i] + tr[i * n + j] + em[t * k + j] + beta[t * k + j] - log_z;
                d_tr[i * n + j] += g * lp.exp();
            }
        }
    }
    let mut prev = k;
    for (t, &y) in gold.iter().enumerate() {
        d_em[t * k + y] -= g;
        d_tr[prev * n + y] -= g;
        prev = y;
    }
    d_tr[prev * n + k + 1] -= g;
}

struct Entry {
    score: f64,
    /// `(label, rank)` at the previous position.
    back: Option<(usize, usize)>,
}

fn prefix(table: &[Vec<Vec<Entry>>], t: usize, y: usize, r: usize) -> Vec<usize> {
    let mut out = vec![y];
    let (mut t, mut y, mut r) = (t, y, r);
    while let Some((py, pr)) = table[t][y][r].back {
        out.push(py);
        t -= 1;
        y = py;
        r = pr;
    }
    out.reverse();
    out
}

fn kbest(lat: &Lattice, em: &[f64], n: usize) -> Vec<(Vec<usize>, f64)> {
    let k = lat.num_labels;
    let len = em.len() / k;
    let mut table: Vec<Vec<Vec<Entry>>> = Vec::with_capacity(len);
    table.push(
        (0..k)
            .map(|j| {
                vec![Entry {
                    score: lat.trans(k, j) + em[j],
                    back: None,
                }]
            })
            .collect(),
    );

    // Candidates are (score, prev label, prev rank); order is score descending,
    // then the lexicographic order of the prefixes they extend.
    let order = |table: &[Vec<Vec<Entry>>], t: usize, a: &(f64, usize, usize), b: &(f64, usize, usize)| {
        b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then_with(|| {
            if (a.1, a.2) == (b.1, b.2) {
                Ordering::Equal
            } else {
                prefix(table, t, a.1, a.2).cmp(&prefix(table, t, b.1, b.2))
            }
        })
    };

    for t in 1..len {
        let mut row = Vec::with_capacity(k);
        for j in 0..k {
            let mut cands: Vec<(f64, usize, usize)> = Vec::new();
            for i in 0..k {
                for (r, e) in table[t - 1][i].iter().enumerate() {
                    cands.push((e.score + lat.trans(i, j) + em[t * k + j], i, r));
                }
            }
            cands.sort_by(|a, b| order(&table, t - 1, a, b));
            cands.truncate(n);
            row.push(
                cands
                    .into_iter()
                    .map(|(score, i, r)| Entry {
                        score,
                        back: Some((i, r)),
                    })
                    .collect(),
            );
        }
        table.push(row);
    }

    let last = len - 1;
    let mut finals: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..k {
        for (r, e) in table[last][i].iter().enumerate() {
            finals.push((e.score + lat.trans(i, k + 1), i, r));
        }
    }
    finals.sort_by(|a, b| order(&table, last, a, b));
    finals.truncate(n);
    finals
        .into_iter()
        .map(|(score, i, r)| (prefix(&table, last, i, r), score))
        .collect()
}

struct CrfNll {
    batch: usize,
    max_len: usize,
    k: usize,
    mask: Vec<bool>,
    gold: Vec<Vec<usize>>,
}

impl CustomOp for CrfNll {
    fn name(&self) -> &'static str {
        "crf_nll"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>> {
        let (em, tr) = (inputs[0], inputs[1]);
        let g = grad.item();
        let k = self.k;
        let mut tr_vals = tr.data().to_vec();
        apply_guards(&mut tr_vals, k);
        let mut d_em = Tensor::zeros(em.shape());
        let mut d_tr = Tensor::zeros(tr.shape());
        for b in 0..self.batch {
            let len = self.mask[b * self.max_len..(b + 1) * self.max_len]
                .iter()
                .take_while(|&&m| m)
                .count();
            let start = b * self.max_len * k;
            let span = start..start + len * k;
            nll_grad(
                &em.data()[span.clone()],
                k,
                &tr_vals,
                &self.gold[b],
                g,
                &mut d_em.data_mut()[span],
                d_tr.data_mut(),
            );
        }
        apply_guard_grads(d_tr.data_mut(), k);
        vec![Some(d_em), Some(d_tr)]
    }
}

/// Guard entries are constants, so their gradient is zero.
fn apply_guard_grads(d_tr: &mut [f64], k: usize) {
    let n = k + 2;
    for i in 0..n {
        d_tr[i * n + k] = 0.0;
        d_tr[(k + 1) * n + i] = 0.0;
    }
}

/// Summed CRF NLL on the tape.
///
/// `emissions` is `[B, L, K]`, `transitions` is `[K+2, K+2]`, and `gold`
/// holds each sentence's labels over its real length.
pub fn crf_nll(
    tape: &mut Tape,
    emissions: Var,
    transitions: Var,
    mask: &[bool],
    gold: &[Vec<usize>],
) -> Result<Var> {
    let lat = lattice_from_tape(tape, emissions, transitions, mask)?;
    for (b, labels) in gold.iter().enumerate().take(lat.batch) {
        let len = lat.length(b);
        if labels.len() != len {
            return Err(TensorError::Dimension {
                op: "crf_nll",
                left: vec![len],
                right: vec![labels.len()],
            }
            .into());
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= lat.num_labels) {
            return Err(TensorError::Index {
                op: "crf_nll",
                id: bad,
                bound: lat.num_labels,
            }
            .into());
        }
    }
    if gold.len() != lat.batch {
        return Err(TensorError::Dimension {
            op: "crf_nll",
            left: vec![lat.batch],
            right: vec![gold.len()],
        }
        .into());
    }
    let total = lat.nll(gold)?;
    let op = CrfNll {
        batch: lat.batch,
        max_len: lat.max_len,
        k: lat.num_labels,
        mask: mask.to_vec(),
        gold: gold.to_vec(),
    };
    Ok(tape.custom(&[emissions, transitions], Tensor::scalar(total), Box::new(op)))
}

/// Snapshot of tape values as a guarded lattice.
pub fn lattice_from_tape(tape: &Tape, emissions: Var, transitions: Var, mask: &[bool]) -> Result<Lattice> {
    let shape = tape.shape(emissions).to_vec();
    if shape.len() != 3 {
        return Err(TensorError::Dimension {
            op: "lattice",
            left: vec![0, 0, 0],
            right: shape,
        }
        .into());
    }
    Lattice::new(
        shape[0],
        shape[1],
        shape[2],
        tape.value(emissions).data().to_vec(),
        mask.to_vec(),
        tape.value(transitions).data().to_vec(),
    )
}
