use super::{extract_segments, Counts, Prf};
use crate::config::TagScheme;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Oracle {
    pub prf: Prf,
    pub accuracy: f64,
    /// Candidate rank chosen per sentence for the F1 oracle.
    pub chosen: Vec<usize>,
}

struct Candidate {
    counts: Counts,
    correct_tokens: usize,
}

/// Best achievable corpus scores when each sentence may use any of its
/// top-`n` candidates.
///
/// The F1 oracle picks the selection that maximizes corpus micro F1,
/// preferring more correct tokens and then lower ranks on ties; the accuracy
/// oracle takes each sentence's most accurate candidate. Both only grow
/// with `n`, and `n = 1` reproduces the plain top-1 scores.
pub fn oracle_at_n<S: AsRef<str>, T: AsRef<str>>(
    gold: &[Vec<S>],
    nbest: &[Vec<Vec<T>>],
    n: usize,
    scheme: TagScheme,
) -> Result<Oracle> {
    if gold.len() != nbest.len() {
        return Err(Error::Contract(format!(
            "{} gold sentences but {} candidate lists",
            gold.len(),
            nbest.len()
        )));
    }
    if n == 0 {
        return Err(Error::Contract("oracle needs n >= 1".into()));
    }
    let mut table: Vec<Vec<Candidate>> = Vec::with_capacity(gold.len());
    let mut total_tokens = 0;
    for (i, (g, list)) in gold.iter().zip(nbest).enumerate() {
        if list.is_empty() {
            return Err(Error::Contract(format!("sentence {i} has no candidates")));
        }
        let gs = extract_segments(g, scheme)?;
        total_tokens += g.len();
        let mut cands = Vec::new();
        for cand in list.iter().take(n) {
            if cand.len() != g.len() {
                return Err(Error::Contract(format!(
                    "sentence {i}: candidate has {} labels for {} tokens",
                    cand.len(),
                    g.len()
                )));
            }
            let ps = extract_segments(cand, scheme)?;
            cands.push(Candidate {
                counts: Counts::of(&gs, &ps),
                correct_tokens: g.iter().zip(cand).filter(|(a, b)| a.as_ref() == b.as_ref()).count(),
            });
        }
        table.push(cands);
    }

    let best_tokens: usize = table
        .iter()
        .map(|c| c.iter().map(|x| x.correct_tokens).max().unwrap_or(0))
        .sum();
    let accuracy = if total_tokens == 0 {
        100.0
    } else {
        100.0 * best_tokens as f64 / total_tokens as f64
    };

    let chosen = best_f1_selection(&table);
    let mut counts = Counts::default();
    for (cands, &r) in table.iter().zip(&chosen) {
        counts.add(cands[r].counts);
    }
    Ok(Oracle {
        prf: counts.prf(),
        accuracy,
        chosen,
    })
}

/// Dinkelbach iteration on `F1 = 2C / (G + P)` with exact integer arithmetic.
fn best_f1_selection(table: &[Vec<Candidate>]) -> Vec<usize> {
    let gold: usize = table.iter().map(|c| c[0].counts.gold).sum();
    let key = |c: &Candidate, num: i64, den: i64| {
        // Maximize C·den − num·P, where num/den is the current ratio.
        (c.counts.correct as i64 * den - num * c.counts.predicted as i64, c.correct_tokens)
    };
    let pick = |num: i64, den: i64| -> Vec<usize> {
        table
            .iter()
            .map(|cands| {
                let mut best = 0;
                for (r, c) in cands.iter().enumerate() {
                    if key(c, num, den) > key(&cands[best], num, den) {
                        best = r;
                    }
                }
                best
            })
            .collect()
    };
    let ratio = |sel: &[usize]| -> (i64, i64) {
        let (mut c, mut p) = (0i64, 0i64);
        for (cands, &r) in table.iter().zip(sel) {
            c += cands[r].counts.correct as i64;
            p += cands[r].counts.predicted as i64;
        }
        (c, gold as i64 + p)
    };

    if gold == 0 {
        // Only an empty prediction scores; fewer predicted segments is never worse.
        return pick(1, 0);
    }
    let mut sel = vec![0; table.len()];
    let (mut num, mut den) = ratio(&sel);
    loop {
        let next = pick(num, den);
        let (n2, d2) = ratio(&next);
        // Stop unless the ratio strictly improved.
        if n2 * den <= num * d2 {
            if n2 * den == num * d2 && next != sel {
                // Equal F1: keep the Dinkelbach choice, which breaks ties by token accuracy.
                sel = next;
            }
            return sel;
        }
        sel = next;
        num = n2;
        den = d2;
    }
}
