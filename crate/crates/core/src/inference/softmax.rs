use crate::autodiff::{Tape, TensorError, Var};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    TokenMean,
}

/// Token cross-entropy over the unmasked positions of `emissions[B, L, K]`.
///
/// `labels` is flat `[B·L]`; entries at masked positions are ignored.
pub fn softmax_loss(
    tape: &mut Tape,
    emissions: Var,
    labels: &[usize],
    mask: &[bool],
    reduction: Reduction,
) -> Result<Var> {
    let shape = tape.shape(emissions).to_vec();
    let k = *shape.last().unwrap_or(&0);
    let rows: usize = shape[..shape.len().saturating_sub(1)].iter().product();
    if labels.len() != rows || mask.len() != rows {
        return Err(TensorError::Dimension {
            op: "softmax_loss",
            left: vec![rows],
            right: vec![labels.len(), mask.len()],
        }
        .into());
    }
    let flat = tape.reshape(emissions, &[rows, k])?;
    let lse = tape.logsumexp(flat, 1)?;
    let live: Vec<usize> = (0..rows).filter(|&r| mask[r]).collect();
    let mut picks = Vec::with_capacity(live.len());
    for &r in &live {
        if labels[r] >= k {
            return Err(TensorError::Index {
                op: "softmax_loss",
                id: labels[r],
                bound: k,
            }
            .into());
        }
        picks.push(r * k + labels[r]);
    }
    let norm = tape.gather(lse, &live)?;
    let gold = tape.gather(flat, &picks)?;
    let per_token = tape.sub(norm, gold)?;
    let total = tape.sum(per_token);
    Ok(match reduction {
        Reduction::TokenMean if !live.is_empty() => tape.scale(total, 1.0 / live.len() as f64),
        _ => total,
    })
}

/// Per-row argmax over `[N, K]` scores; ties go to the lowest index.
pub fn argmax_rows(scores: &[f64], k: usize) -> Vec<usize> {
    scores
        .chunks(k)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
