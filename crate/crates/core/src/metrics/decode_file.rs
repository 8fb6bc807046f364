use std::fmt::Write as _;
use std::path::Path;

use crate::corpus::{Sentence, NBEST_HEADER};
use crate::error::{Error, Result};

/// Candidate label sequences with their probabilities, best first.
pub type NbestList = Vec<(Vec<String>, f64)>;

/// Probabilities are truncated to six decimals so a printed list never sums above 1.
fn prob_text(p: f64) -> String {
    format!("{:.6}", (p * 1e6).floor() / 1e6)
}

/// Decode text: each token's input columns followed by one predicted label,
/// or by `n` candidate labels under a probability header in n-best mode.
pub fn format_decode(sentences: &[Sentence], labels: &[Vec<String>], nbest: Option<&[NbestList]>) -> Result<String> {
    if labels.len() != sentences.len() || nbest.is_some_and(|n| n.len() != sentences.len()) {
        return Err(Error::Contract(format!(
            "{} sentences but {} label sequences",
            sentences.len(),
            labels.len()
        )));
    }
    let mut s = String::new();
    for (i, sent) in sentences.iter().enumerate() {
        let cands = nbest.map(|n| &n[i]);
        if let Some(c) = cands {
            let probs: Vec<String> = c.iter().map(|(_, p)| prob_text(*p)).collect();
            let _ = writeln!(s, "{NBEST_HEADER} {}", probs.join(" "));
        }
        for (t, tok) in sent.tokens.iter().enumerate() {
            s.push_str(&tok.columns.join(" "));
            match cands {
                Some(c) => {
                    for (seq, _) in c {
                        s.push(' ');
                        s.push_str(&seq[t]);
                    }
                }
                None => {
                    s.push(' ');
                    s.push_str(&labels[i][t]);
                }
            }
            s.push('\n');
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn write_decode(
    path: &Path,
    sentences: &[Sentence],
    labels: &[Vec<String>],
    nbest: Option<&[NbestList]>,
) -> Result<()> {
    let text = format_decode(sentences, labels, nbest)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
