use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::conll::{normalize_word, Sentence};
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_STR: &str = "</pad>";
pub const UNK_STR: &str = "</unk>";

/// Bidirectional string/index table.
///
/// Index 0 is padding. Alphabets created with [`Alphabet::with_unknown`]
/// reserve index 1 for strings never inserted.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "AlphabetRepr", into = "AlphabetRepr")]
pub struct Alphabet {
    entries: HashMap<String, usize>,
    reverse: Vec<String>,
    has_unknown: bool,
    frozen: bool,
}

#[derive(Serialize, Deserialize)]
struct AlphabetRepr {
    has_unknown: bool,
    entries: Vec<String>,
}

impl From<AlphabetRepr> for Alphabet {
    fn from(r: AlphabetRepr) -> Self {
        let entries = r
            .entries
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Alphabet {
            entries,
            reverse: r.entries,
            has_unknown: r.has_unknown,
            frozen: true,
        }
    }
}

impl From<Alphabet> for AlphabetRepr {
    fn from(a: Alphabet) -> Self {
        AlphabetRepr {
            has_unknown: a.has_unknown,
            entries: a.reverse,
        }
    }
}

impl PartialEq for Alphabet {
    fn eq(&self, other: &Self) -> bool {
        self.reverse == other.reverse && self.has_unknown == other.has_unknown
    }
}

impl Alphabet {
    /// Word, character and feature vocabularies: padding plus unknown.
    pub fn with_unknown() -> Self {
        let mut a = Alphabet {
            entries: HashMap::new(),
            reverse: Vec::new(),
            has_unknown: true,
            frozen: false,
        };
        a.push(PAD_STR);
        a.push(UNK_STR);
        a
    }

    /// Label vocabulary: padding only.
    pub fn labels() -> Self {
        let mut a = Alphabet {
            entries: HashMap::new(),
            reverse: Vec::new(),
            has_unknown: false,
            frozen: false,
        };
        a.push(PAD_STR);
        a
    }

    fn push(&mut self, s: &str) -> usize {
        let idx = self.reverse.len();
        self.entries.insert(s.to_string(), idx);
        self.reverse.push(s.to_string());
        idx
    }

    /// Inserts `s` if absent. On a frozen alphabet nothing is inserted and the
    /// existing or unknown index is returned.
    pub fn insert(&mut self, s: &str) -> usize {
        if let Some(&i) = self.entries.get(s) {
            return i;
        }
        if self.frozen {
            return if self.has_unknown { UNK } else { PAD };
        }
        self.push(s)
    }

    pub fn get(&self, s: &str) -> Option<usize> {
        self.entries.get(s).copied()
    }

    /// Index of `s`, falling back to the unknown index.
    pub fn index(&self, s: &str) -> usize {
        match self.entries.get(s) {
            Some(&i) => i,
            None if self.has_unknown => UNK,
            None => PAD,
        }
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.reverse.get(index).map(String::as_str)
    }

    pub fn contains(&self, s: &str) -> bool {
        self.entries.contains_key(s)
    }

    pub fn len(&self) -> usize {
        self.reverse.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reverse.is_empty()
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn has_unknown(&self) -> bool {
        self.has_unknown
    }

    /// Entries after the reserved slots, in index order.
    pub fn user_entries(&self) -> &[String] {
        let start = if self.has_unknown { 2 } else { 1 };
        &self.reverse[start..]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alphabets {
    pub word: Alphabet,
    pub char: Alphabet,
    pub label: Alphabet,
    /// One alphabet per declared feature, in declaration order.
    pub features: Vec<(String, Alphabet)>,
}

impl Alphabets {
    /// Number of real labels (padding excluded).
    pub fn num_labels(&self) -> usize {
        self.label.len() - 1
    }

    pub fn feature(&self, name: &str) -> Option<&Alphabet> {
        self.features.iter().find(|(n, _)| n == name).map(|(_, a)| a)
    }
}

/// Builds frozen vocabularies from all splits.
///
/// With `open_label_set = false`, labels that occur in dev/test but not in
/// train are rejected.
pub fn build_alphabets(
    train: &[Sentence],
    dev: &[Sentence],
    test: &[Sentence],
    feature_names: &[String],
    open_label_set: bool,
) -> Result<Alphabets> {
    if train.is_empty() {
        return Err(Error::Contract("training data is empty".into()));
    }
    let mut word = Alphabet::with_unknown();
    let mut chars = Alphabet::with_unknown();
    let mut label = Alphabet::labels();
    let mut features: Vec<(String, Alphabet)> = feature_names
        .iter()
        .map(|n| (n.clone(), Alphabet::with_unknown()))
        .collect();

    for (split, sentences) in [("train", train), ("dev", dev), ("test", test)] {
        for s in sentences {
            for tok in &s.tokens {
                word.insert(&normalize_word(&tok.surface));
                let mut buf = [0u8; 4];
                for c in tok.surface.chars() {
                    chars.insert(c.encode_utf8(&mut buf));
                }
                for (name, alpha) in &mut features {
                    if let Some(v) = tok.feature(name) {
                        alpha.insert(v);
                    }
                }
                if tok.label.is_empty() {
                    continue;
                }
                if split != "train" && !open_label_set && !label.contains(&tok.label) {
                    return Err(Error::Format {
                        path: None,
                        line: 0,
                        msg: format!("label {} appears in {split} but not in train", tok.label),
                    });
                }
                label.insert(&tok.label);
            }
        }
    }
    word.freeze();
    chars.freeze();
    label.freeze();
    for (_, a) in &mut features {
        a.freeze();
    }
    Ok(Alphabets {
        word,
        char: chars,
        label,
        features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::conll::{parse_conll, ReadMode};

    #[test]
    fn counting_and_reserved_indices() {
        let train = parse_conll("I O\nlove O\nI O\n", ReadMode::Train).unwrap();
        let a = build_alphabets(&train, &[], &[], &[], true).unwrap();
        assert_eq!(a.word.len(), 4);
        assert_eq!(a.word.index("I"), 2);
        assert_eq!(a.word.index("unseen"), UNK);
        assert_eq!(a.label.len(), 2);
        assert_eq!(a.num_labels(), 1);
        assert!(a.word.is_frozen());
    }

    #[test]
    fn frozen_lookup_never_inserts() {
        let mut a = Alphabet::with_unknown();
        a.insert("x");
        a.freeze();
        assert_eq!(a.insert("y"), UNK);
        assert_eq!(a.len(), 3);
    }

    #[test]
    fn closed_label_set_rejects_dev_only_labels() {
        let train = parse_conll("a O\n", ReadMode::Train).unwrap();
        let dev = parse_conll("b B-PER\n", ReadMode::Train).unwrap();
        assert!(build_alphabets(&train, &dev, &[], &[], false).is_err());
        let a = build_alphabets(&train, &dev, &[], &[], true).unwrap();
        assert_eq!(a.num_labels(), 2);
    }

    #[test]
    fn word_alphabet_is_digit_normalized() {
        let train = parse_conll("1997 O\n2001 O\n", ReadMode::Train).unwrap();
        let a = build_alphabets(&train, &[], &[], &[], true).unwrap();
        assert_eq!(a.word.len(), 3);
        assert_eq!(a.char.len(), 2 + 5);
    }

    #[test]
    fn serde_round_trip() {
        let train = parse_conll("a [POS]x O\nb [POS]y B-X\n", ReadMode::Train).unwrap();
        let a = build_alphabets(&train, &[], &[], &["POS".into()], true).unwrap();
        let json = serde_json::to_string(&a).unwrap();
        let back: Alphabets = serde_json::from_str(&json).unwrap();
        assert_eq!(a, back);
        assert_eq!(back.word.index("b"), a.word.index("b"));
    }
}
