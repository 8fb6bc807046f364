use std::path::Path;

use crate::error::{Error, Result};

/// Header line written by the decoder in n-best mode; skipped when reading.
pub const NBEST_HEADER: &str = "# nbest-probabilities:";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadMode {
    /// Final column is the gold label.
    Train,
    /// No label column is taken; trailing plain columns are kept verbatim.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    /// `[Name]value` columns in file order.
    pub features: Vec<(String, String)>,
    /// Gold label; empty in raw mode.
    pub label: String,
    /// Every input column except the label, in file order.
    pub columns: Vec<String>,
}

impl Token {
    pub fn feature(&self, name: &str) -> Option<&str> {
        self.features
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    }

    pub fn feature_names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|(n, _)| n.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.label.as_str()).collect()
    }

    pub fn has_labels(&self) -> bool {
        self.tokens.iter().all(|t| !t.label.is_empty())
    }

    pub fn feature_names(&self) -> Vec<&str> {
        self.tokens
            .first()
            .map(|t| t.feature_names().collect())
            .unwrap_or_default()
    }
}

/// Replaces every decimal digit with `0`.
pub fn normalize_word(surface: &str) -> String {
    surface
        .chars()
        .map(|c| if c.is_ascii_digit() { '0' } else { c })
        .collect()
}

/// Splits a `[Name]value` column.
pub fn parse_feature_column(col: &str) -> Option<(&str, &str)> {
    let rest = col.strip_prefix('[')?;
    let close = rest.find(']')?;
    let name = &rest[..close];
    if name.is_empty() {
        return None;
    }
    Some((name, &rest[close + 1..]))
}

pub fn read_conll(path: impl AsRef<Path>, mode: ReadMode) -> Result<Vec<Sentence>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_conll(&text, mode).map_err(|e| match e {
        Error::Format { line, msg, .. } => Error::Format {
            path: Some(path.to_path_buf()),
            line,
            msg,
        },
        other => other,
    })
}

/// Parses CoNLL-style column text. Line numbers in errors are 1-based.
pub fn parse_conll(text: &str, mode: ReadMode) -> Result<Vec<Sentence>> {
    let mut sentences = Vec::new();
    let mut current: Vec<Token> = Vec::new();
    let mut first_line = 0;
    let fmt = |line: usize, msg: String| Error::Format {
        path: None,
        line,
        msg,
    };

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.starts_with(NBEST_HEADER) {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            if !current.is_empty() {
                sentences.push(Sentence {
                    tokens: std::mem::take(&mut current),
                });
            }
            continue;
        }
        if cols[0] == "-DOCSTART-" {
            continue;
        }

        let (body, label) = match mode {
            ReadMode::Train => {
                if cols.len() < 2 {
                    return Err(fmt(lineno, "missing label column".into()));
                }
                let label = cols[cols.len() - 1];
                if parse_feature_column(label).is_some() {
                    return Err(fmt(lineno, format!("label column looks like a feature: {label}")));
                }
                (&cols[..cols.len() - 1], label.to_string())
            }
            ReadMode::Raw => (&cols[..], String::new()),
        };

        let mut features: Vec<(String, String)> = Vec::new();
        for col in &body[1..] {
            if let Some((name, value)) = parse_feature_column(col) {
                if features.iter().any(|(n, _)| n == name) {
                    return Err(fmt(lineno, format!("duplicate feature [{name}]")));
                }
                features.push((name.to_string(), value.to_string()));
            }
        }

        let token = Token {
            surface: body[0].to_string(),
            features,
            label,
            columns: body.iter().map(|c| c.to_string()).collect(),
        };
        if let Some(first) = current.first() {
            let expected: Vec<&str> = first.feature_names().collect();
            let got: Vec<&str> = token.feature_names().collect();
            if expected != got {
                return Err(fmt(
                    lineno,
                    format!(
                        "feature columns {got:?} differ from {expected:?} declared at line {first_line}"
                    ),
                ));
            }
        } else {
            first_line = lineno;
        }
        current.push(token);
    }
    if !current.is_empty() {
        sentences.push(Sentence { tokens: current });
    }
    Ok(sentences)
}
