//! Token accuracy, segment F1, n-best oracles, and decode files.

mod decode_file;
mod oracle;
mod segments;

pub use decode_file::{format_decode, write_decode, NbestList};
pub use oracle::{oracle_at_n, Oracle};
pub use segments::{extract_segments, segments_to_labels, Segment};

use std::fmt::Write as _;

use crate::config::TagScheme;
use crate::error::{Error, Result};

/// Micro-averaged scores in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Segment counts pooled over a corpus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
}

impl Counts {
    pub fn of(gold: &[Segment], pred: &[Segment]) -> Counts {
        let correct = pred.iter().filter(|p| gold.contains(p)).count();
        Counts {
            gold: gold.len(),
            predicted: pred.len(),
            correct,
        }
    }

    pub fn add(&mut self, other: Counts) {
        self.gold += other.gold;
        self.predicted += other.predicted;
        self.correct += other.correct;
    }

    pub fn prf(&self) -> Prf {
        if self.gold == 0 && self.predicted == 0 {
            return Prf {
                precision: 100.0,
                recall: 100.0,
                f1: 100.0,
            };
        }
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { 100.0 * a as f64 / b as f64 };
        let precision = ratio(self.correct, self.predicted);
        let recall = ratio(self.correct, self.gold);
        let f1 = ratio(2 * self.correct, self.gold + self.predicted);
        Prf { precision, recall, f1 }
    }
}

pub fn f1(gold: &[Vec<Segment>], pred: &[Vec<Segment>]) -> Result<Prf> {
    if gold.len() != pred.len() {
        return Err(Error::Contract(format!(
            "{} gold sentences but {} predicted",
            gold.len(),
            pred.len()
        )));
    }
    let mut c = Counts::default();
    for (g, p) in gold.iter().zip(pred) {
        c.add(Counts::of(g, p));
    }
    Ok(c.prf())
}

/// Percentage of matching labels; 100 for an empty corpus.
pub fn token_accuracy<S: AsRef<str>, T: AsRef<str>>(gold: &[Vec<S>], pred: &[Vec<T>]) -> Result<f64> {
    if gold.len() != pred.len() {
        return Err(Error::Contract(format!(
            "{} gold sentences but {} predicted",
            gold.len(),
            pred.len()
        )));
    }
    let (mut right, mut total) = (0usize, 0usize);
    for (g, p) in gold.iter().zip(pred) {
        if g.len() != p.len() {
            return Err(Error::Contract(format!(
                "sentence of {} tokens decoded to {} labels",
                g.len(),
                p.len()
            )));
        }
        total += g.len();
        right += g.iter().zip(p).filter(|(a, b)| a.as_ref() == b.as_ref()).count();
    }
    Ok(if total == 0 { 100.0 } else { 100.0 * right as f64 / total as f64 })
}

/// Label-sequence scores for a corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub prf: Prf,
}

pub fn evaluate<S: AsRef<str>, T: AsRef<str>>(
    gold: &[Vec<S>],
    pred: &[Vec<T>],
    scheme: TagScheme,
) -> Result<Evaluation> {
    let accuracy = token_accuracy(gold, pred)?;
    let g = gold
        .iter()
        .map(|s| extract_segments(s, scheme))
        .collect::<Result<Vec<_>>>()?;
    let p = pred
        .iter()
        .map(|s| extract_segments(s, scheme))
        .collect::<Result<Vec<_>>>()?;
    Ok(Evaluation {
        accuracy,
        prf: f1(&g, &p)?,
    })
}

impl Evaluation {
    pub fn report(&self) -> String {
        metric_report(&[
            ("accuracy", self.accuracy),
            ("precision", self.prf.precision),
            ("recall", self.prf.recall),
            ("f1", self.prf.f1),
        ])
    }
}

/// `name<TAB>value` lines with two decimals.
pub fn metric_report(metrics: &[(&str, f64)]) -> String {
    let mut s = String::new();
    for (name, value) in metrics {
        let _ = writeln!(s, "{name}\t{value:.2}");
    }
    s
}
