use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::alphabet::{Alphabets, PAD};
use super::conll::{normalize_word, Sentence};

/// A sentence mapped to alphabet indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedSentence {
    pub words: Vec<usize>,
    pub chars: Vec<Vec<usize>>,
    /// One id sequence per declared feature.
    pub features: Vec<Vec<usize>>,
    /// Label alphabet ids; `PAD` where no gold label is known.
    pub labels: Vec<usize>,
}

impl EncodedSentence {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

pub fn encode_sentence(s: &Sentence, alphabets: &Alphabets) -> EncodedSentence {
    let mut buf = [0u8; 4];
    EncodedSentence {
        words: s
            .tokens
            .iter()
            .map(|t| alphabets.word.index(&normalize_word(&t.surface)))
            .collect(),
        chars: s
            .tokens
            .iter()
            .map(|t| {
                t.surface
                    .chars()
                    .map(|c| alphabets.char.index(c.encode_utf8(&mut buf)))
                    .collect()
            })
            .collect(),
        features: alphabets
            .features
            .iter()
            .map(|(name, alpha)| {
                s.tokens
                    .iter()
                    .map(|t| t.feature(name).map_or(super::alphabet::UNK, |v| alpha.index(v)))
                    .collect()
            })
            .collect(),
        labels: s
            .tokens
            .iter()
            .map(|t| alphabets.label.get(&t.label).unwrap_or(PAD))
            .collect(),
    }
}

/// Padded, masked index tensors for a group of sentences.
///
/// All matrices are flat row-major: `[B, L]`, `[B, L, C]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub batch_size: usize,
    pub max_len: usize,
    pub max_chars: usize,
    pub word_ids: Vec<usize>,
    pub char_ids: Vec<usize>,
    pub feature_ids: Vec<Vec<usize>>,
    pub label_ids: Vec<usize>,
    pub word_mask: Vec<bool>,
    pub word_lengths: Vec<usize>,
    pub char_lengths: Vec<usize>,
    /// Position of each row's sentence in the input list.
    pub sentence_index: Vec<usize>,
}

impl Batch {
    /// Builds a batch from sentences in the given order.
    pub fn from_sentences(sentences: &[&EncodedSentence], indices: &[usize]) -> Batch {
        let b = sentences.len();
        let l = sentences.iter().map(|s| s.len()).max().unwrap_or(0);
        let c = sentences
            .iter()
            .flat_map(|s| s.chars.iter().map(Vec::len))
            .max()
            .unwrap_or(0);
        let nfeat = sentences.first().map_or(0, |s| s.features.len());
        let mut batch = Batch {
            batch_size: b,
            max_len: l,
            max_chars: c,
            word_ids: vec![PAD; b * l],
            char_ids: vec![PAD; b * l * c],
            feature_ids: vec![vec![PAD; b * l]; nfeat],
            label_ids: vec![PAD; b * l],
            word_mask: vec![false; b * l],
            word_lengths: Vec::with_capacity(b),
            char_lengths: vec![0; b * l],
            sentence_index: indices.to_vec(),
        };
        for (i, s) in sentences.iter().enumerate() {
            batch.word_lengths.push(s.len());
            for t in 0..s.len() {
                let pos = i * l + t;
                batch.word_ids[pos] = s.words[t];
                batch.label_ids[pos] = s.labels[t];
                batch.word_mask[pos] = true;
                batch.char_lengths[pos] = s.chars[t].len();
                for (k, &ch) in s.chars[t].iter().enumerate() {
                    batch.char_ids[pos * c + k] = ch;
                }
                for (f, ids) in s.features.iter().enumerate() {
                    batch.feature_ids[f][pos] = ids[t];
                }
            }
        }
        batch
    }

    pub fn num_tokens(&self) -> usize {
        self.word_lengths.iter().sum()
    }

    /// Copy of this batch re-padded to larger extents.
    pub fn padded_to(&self, max_len: usize, max_chars: usize) -> Batch {
        assert!(max_len >= self.max_len && max_chars >= self.max_chars);
        let (b, l, c) = (self.batch_size, self.max_len, self.max_chars);
        let mut out = Batch {
            batch_size: b,
            max_len,
            max_chars,
            word_ids: vec![PAD; b * max_len],
            char_ids: vec![PAD; b * max_len * max_chars],
            feature_ids: vec![vec![PAD; b * max_len]; self.feature_ids.len()],
            label_ids: vec![PAD; b * max_len],
            word_mask: vec![false; b * max_len],
            word_lengths: self.word_lengths.clone(),
            char_lengths: vec![0; b * max_len],
            sentence_index: self.sentence_index.clone(),
        };
        for i in 0..b {
            for t in 0..l {
                let (src, dst) = (i * l + t, i * max_len + t);
                out.word_ids[dst] = self.word_ids[src];
                out.label_ids[dst] = self.label_ids[src];
                out.word_mask[dst] = self.word_mask[src];
                out.char_lengths[dst] = self.char_lengths[src];
                for f in 0..self.feature_ids.len() {
                    out.feature_ids[f][dst] = self.feature_ids[f][src];
                }
                for k in 0..c {
                    out.char_ids[dst * max_chars + k] = self.char_ids[src * c + k];
                }
            }
        }
        out
    }
}

/// Optionally shuffles, then chunks into batches of at most `batch_size`.
/// Within a batch, sentences are ordered by length, longest first.
pub fn make_batches(
    sentences: &[EncodedSentence],
    batch_size: usize,
    shuffle: bool,
    seed: u64,
) -> Vec<Batch> {
    assert!(batch_size >= 1, "batch_size must be positive");
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    if shuffle {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    order
        .chunks(batch_size)
        .map(|chunk| {
            let mut idx = chunk.to_vec();
            idx.sort_by_key(|&i| std::cmp::Reverse(sentences[i].len()));
            let refs: Vec<&EncodedSentence> = idx.iter().map(|&i| &sentences[i]).collect();
            Batch::from_sentences(&refs, &idx)
        })
        .collect()
}
