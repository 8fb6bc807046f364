use std::collections::HashMap;
use std::path::Path;

use rand::Rng;

use super::alphabet::Alphabet;
use super::conll::normalize_word;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Coverage {
    pub exact: usize,
    pub normalized: usize,
    pub total: usize,
}

impl Coverage {
    pub fn covered(&self) -> usize {
        self.exact + self.normalized
    }
}

/// `[rows, dim]` table drawn uniformly from `±sqrt(3 / dim)`.
pub fn random_embedding(rows: usize, dim: usize, rng: &mut impl Rng) -> Tensor {
    let scale = (3.0 / dim as f64).sqrt();
    let data = (0..rows * dim).map(|_| rng.gen_range(-scale..scale)).collect();
    Tensor::new(&[rows, dim], data).expect("embedding shape")
}

/// Loads a whitespace-separated text embedding file into a table indexed by `alphabet`.
///
/// A file token fills the row of the identical alphabet entry; failing that,
/// the row of its digit-normalized form, unless an exact match already claimed
/// that row. Rows not covered keep their random initialization.
pub fn load_pretrained(
    path: impl AsRef<Path>,
    alphabet: &Alphabet,
    dim: usize,
    rng: &mut impl Rng,
) -> Result<(Tensor, Coverage)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pretrained(&text, alphabet, dim, rng).map_err(|e| match e {
        Error::Format { line, msg, .. } => Error::Format {
            path: Some(path.to_path_buf()),
            line,
            msg,
        },
        other => other,
    })
}

pub fn parse_pretrained(
    text: &str,
    alphabet: &Alphabet,
    dim: usize,
    rng: &mut impl Rng,
) -> Result<(Tensor, Coverage)> {
    let mut table = random_embedding(alphabet.len(), dim, rng);
    let mut exact_rows: HashMap<usize, ()> = HashMap::new();
    let mut normalized_rows: HashMap<usize, ()> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let mut cols = line.split_whitespace();
        let Some(token) = cols.next() else { continue };
        let values: Vec<f64> = cols
            .map(|c| {
                c.parse::<f64>().map_err(|_| Error::Format {
                    path: None,
                    line: i + 1,
                    msg: format!("not a number: {c}"),
                })
            })
            .collect::<Result<_>>()?;
        if values.len() != dim {
            return Err(Error::Format {
                path: None,
                line: i + 1,
                msg: format!("expected {dim} values, found {}", values.len()),
            });
        }
        let (row, exact) = match alphabet.get(token) {
            Some(r) => (r, true),
            None => match alphabet.get(&normalize_word(token)) {
                Some(r) => (r, false),
                None => continue,
            },
        };
        if exact {
            normalized_rows.remove(&row);
            exact_rows.insert(row, ());
        } else if exact_rows.contains_key(&row) {
            continue;
        } else {
            normalized_rows.insert(row, ());
        }
        table.data_mut()[row * dim..(row + 1) * dim].copy_from_slice(&values);
    }
    let coverage = Coverage {
        exact: exact_rows.len(),
        normalized: normalized_rows.len(),
        total: alphabet.len(),
    };
    Ok((table, coverage))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn alphabet(words: &[&str]) -> Alphabet {
        let mut a = Alphabet::with_unknown();
        for w in words {
            a.insert(w);
        }
        a.freeze();
        a
    }

    #[test]
    fn copies_matching_rows() {
        let a = alphabet(&["the", "cat"]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (t, cov) = parse_pretrained("the 0.1 0.2 0.3\n", &a, 3, &mut rng).unwrap();
        assert_eq!(t.row(a.index("the")), &[0.1, 0.2, 0.3]);
        assert_eq!(cov.exact, 1);
        let bound = (3.0f64 / 3.0).sqrt();
        assert!(t.row(a.index("cat")).iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn empty_file_and_absent_tokens() {
        let a = alphabet(&["x"]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (t, cov) = parse_pretrained("", &a, 2, &mut rng).unwrap();
        assert_eq!(cov.covered(), 0);
        assert_eq!(t.shape(), &[3, 2]);
        let (_, cov) = parse_pretrained("zzz 1 2\n", &a, 2, &mut rng).unwrap();
        assert_eq!(cov.covered(), 0);
    }

    #[test]
    fn dim_mismatch_reports_line() {
        let a = alphabet(&["x"]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = parse_pretrained("x 1 2\ny 1\n", &a, 2, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Format { line: 2, .. }));
    }

    #[test]
    fn exact_match_beats_normalized() {
        let a = alphabet(&["0000"]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (t, cov) = parse_pretrained("0000 1 1\n1997 2 2\n", &a, 2, &mut rng).unwrap();
        assert_eq!(t.row(2), &[1.0, 1.0]);
        assert_eq!(cov.exact, 1);
        assert_eq!(cov.normalized, 0);
        let (t, cov) = parse_pretrained("1997 2 2\n0000 1 1\n", &a, 2, &mut rng).unwrap();
        assert_eq!(t.row(2), &[1.0, 1.0]);
        assert_eq!(cov.exact, 1);
        let (t, cov) = parse_pretrained("1997 2 2\n", &a, 2, &mut rng).unwrap();
        assert_eq!(t.row(2), &[2.0, 2.0]);
        assert_eq!(cov.normalized, 1);
    }
}
