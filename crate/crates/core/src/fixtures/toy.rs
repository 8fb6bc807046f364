use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::corpus::{Sentence, Token};
use crate::error::{Error, Result};

pub const TOY_SEED: u64 = 7;
pub const TOY_SENTENCES: usize = 20;
pub const TOY_LABELS: [&str; 4] = ["O", "B-PER", "I-PER", "B-LOC"];
pub const SPLITS: [&str; 3] = ["train.bio", "dev.bio", "test.bio"];
pub const MANIFEST: &str = "MANIFEST.sha256";

const DETERMINERS: [&str; 2] = ["the", "a"];
const NOUNS: [&str; 4] = ["report", "team", "plan", "game"];
const VERBS: [&str; 3] = ["met", "visited", "saw"];
const TITLES: [&str; 2] = ["mr", "dr"];
const PREPS: [&str; 2] = ["in", "at"];
const FIRST: [&str; 3] = ["Bruce", "Alice", "Omar"];
const LAST: [&str; 3] = ["Lee", "Chen", "Rossi"];
const PLACES: [&str; 3] = ["Paris", "Tokyo", "Lima"];

/// Synthetic NER corpus: names follow a title word, places follow a preposition.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyCorpus {
    pub seed: u64,
    pub train: Vec<Sentence>,
    pub dev: Vec<Sentence>,
    pub test: Vec<Sentence>,
}

fn token(word: &str, pos: &str, label: &str) -> Token {
    let cap = if word.starts_with(|c: char| c.is_uppercase()) { "1" } else { "0" };
    let columns = vec![word.to_string(), format!("[POS]{pos}"), format!("[Cap]{cap}")];
    Token {
        surface: word.to_string(),
        features: vec![("POS".into(), pos.into()), ("Cap".into(), cap.into())],
        label: label.to_string(),
        columns,
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, words: &[&'a str]) -> &'a str {
    words.choose(rng).expect("non-empty word list")
}

fn person(rng: &mut ChaCha8Rng, out: &mut Vec<Token>, full: bool) {
    out.push(token(pick(rng, &TITLES), "NNP", "O"));
    out.push(token(pick(rng, &FIRST), "NNP", "B-PER"));
    if full {
        out.push(token(pick(rng, &LAST), "NNP", "I-PER"));
    }
}

fn sentence(rng: &mut ChaCha8Rng, force_full_person: bool) -> Sentence {
    let mut tokens = Vec::new();
    if force_full_person {
        person(rng, &mut tokens, true);
    }
    let chunks = rng.gen_range(3..=6);
    for _ in 0..chunks {
        match rng.gen_range(0..10) {
            0..=2 => {
                tokens.push(token(pick(rng, &DETERMINERS), "DT", "O"));
                tokens.push(token(pick(rng, &NOUNS), "NN", "O"));
                if rng.gen_bool(0.5) {
                    tokens.push(token(pick(rng, &VERBS), "VBD", "O"));
                }
            }
            3..=6 => {
                let full = rng.gen_bool(0.5);
                person(rng, &mut tokens, full);
            }
            _ => {
                tokens.push(token(pick(rng, &PREPS), "IN", "O"));
                tokens.push(token(pick(rng, &PLACES), "NNP", "B-LOC"));
            }
        }
    }
    Sentence { tokens }
}

/// Train split of `n` sentences plus dev and test splits of `max(1, n/2)` each.
///
/// The first training sentence always holds a two-token person.
pub fn generate_toy(seed: u64, n: usize) -> ToyCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let held_out = (n / 2).max(1);
    let train = (0..n).map(|i| sentence(&mut rng, i == 0)).collect();
    let dev = (0..held_out).map(|_| sentence(&mut rng, false)).collect();
    let test = (0..held_out).map(|_| sentence(&mut rng, false)).collect();
    ToyCorpus { seed, train, dev, test }
}

/// CoNLL text with the label as the last column.
pub fn format_conll(sentences: &[Sentence]) -> String {
    let mut s = String::new();
    for sent in sentences {
        for t in &sent.tokens {
            let _ = writeln!(s, "{} {}", t.columns.join(" "), t.label);
        }
        s.push('\n');
    }
    s
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl ToyCorpus {
    pub fn splits(&self) -> [(&'static str, &[Sentence]); 3] {
        [(SPLITS[0], &self.train), (SPLITS[1], &self.dev), (SPLITS[2], &self.test)]
    }

    /// Writes the three splits and a `sha256sum`-style manifest into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = String::new();
        let mut paths = Vec::new();
        for (name, sents) in self.splits() {
            let text = format_conll(sents);
            let path = dir.join(name);
            std::fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
            let _ = writeln!(manifest, "{}  {name}", sha256_hex(text.as_bytes()));
            paths.push(path);
        }
        let path = dir.join(MANIFEST);
        std::fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
        Ok(paths)
    }

    /// `(file name, sha256)` of each split as it would be written.
    pub fn digests(&self) -> Vec<(String, String)> {
        self.splits()
            .iter()
            .map(|(name, s)| (name.to_string(), sha256_hex(format_conll(s).as_bytes())))
            .collect()
    }
}

/// Parses a manifest written by [`ToyCorpus::write`].
pub fn read_manifest(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| {
            let (hash, name) = l.split_once("  ")?;
            Some((name.trim().to_string(), hash.trim().to_string()))
        })
        .collect()
}
