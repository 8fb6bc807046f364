use rand::Rng;

use super::cnn::ConvLayer;
use super::rnn::{BiRnn, RnnKind};
use super::{length_mask, Forward};
use crate::autodiff::{ParamId, ParamStore, Var};
use crate::config::SeqKind;
use crate::corpus::random_embedding;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
enum Extractor {
    Rnn(BiRnn),
    Cnn(ConvLayer),
}

/// Encodes each word's characters into a fixed-width vector.
///
/// RNN kinds concatenate the final forward and backward states
/// (`output_dim / 2` units per direction); CNN max-pools relu features over
/// the real characters only.
#[derive(Debug, Clone)]
pub struct CharEncoder {
    pub kind: SeqKind,
    pub embeddings: ParamId,
    pub emb_dim: usize,
    pub output_dim: usize,
    extractor: Extractor,
}

impl CharEncoder {
    pub fn new(
        store: &mut ParamStore,
        kind: SeqKind,
        alphabet_size: usize,
        emb_dim: usize,
        output_dim: usize,
        window: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let embeddings = store.add("char.embeddings", random_embedding(alphabet_size, emb_dim, rng));
        let extractor = match kind {
            SeqKind::Lstm | SeqKind::Gru => {
                let rk = if kind == SeqKind::Lstm { RnnKind::Lstm } else { RnnKind::Gru };
                Extractor::Rnn(BiRnn::new(store, "char.rnn", rk, emb_dim, output_dim / 2, rng))
            }
            SeqKind::Cnn => Extractor::Cnn(ConvLayer::new(store, "char.cnn", window, emb_dim, output_dim, rng)),
        };
        CharEncoder {
            kind,
            embeddings,
            emb_dim,
            output_dim,
            extractor,
        }
    }

    /// Encodes `N` words given as a flat `[N, C]` id matrix.
    /// Words of length 0 (padding) encode to zeros.
    pub fn encode(&self, f: &mut Forward, char_ids: &[usize], lengths: &[usize], max_chars: usize) -> Result<Var> {
        let n = lengths.len();
        if char_ids.len() != n * max_chars {
            return Err(Error::Tensor(crate::autodiff::TensorError::Dimension {
                op: "char encode",
                left: vec![n, max_chars],
                right: vec![char_ids.len()],
            }));
        }
        let mask = length_mask(lengths, max_chars);
        let table = f.tape.param(self.embeddings);
        let emb = f.tape.lookup(table, char_ids)?;
        let emb = f.dropout(emb)?;
        let emb = f.zero_rows(emb, &mask)?;
        let emb = f.tape.reshape(emb, &[n, max_chars, self.emb_dim])?;
        match &self.extractor {
            Extractor::Rnn(rnn) => Ok(rnn.run(f, emb, &mask)?.final_state),
            Extractor::Cnn(conv) => {
                let feats = conv.forward(f, emb)?;
                Ok(f.tape.masked_max_pool(feats, lengths)?)
            }
        }
    }

    /// Single word of `length` real characters followed by optional padding.
    pub fn encode_word(&self, f: &mut Forward, char_ids: &[usize], length: usize) -> Result<Var> {
        if length == 0 {
            return Err(Error::Domain("cannot encode a word of length 0".into()));
        }
        if length > char_ids.len() {
            return Err(Error::Domain(format!(
                "length {length} exceeds {} character ids",
                char_ids.len()
            )));
        }
        let v = self.encode(f, char_ids, &[length], char_ids.len())?;
        Ok(f.tape.reshape(v, &[self.output_dim])?)
    }

    /// `[B, L, output_dim]` encodings for a batch's `[B, L, C]` character cube.
    pub fn encode_batch(
        &self,
        f: &mut Forward,
        char_ids: &[usize],
        char_lengths: &[usize],
        word_mask: &[bool],
        batch: usize,
        max_len: usize,
        max_chars: usize,
    ) -> Result<Var> {
        if char_lengths.len() != batch * max_len || word_mask.len() != batch * max_len {
            return Err(Error::Tensor(crate::autodiff::TensorError::Dimension {
                op: "char encode_batch",
                left: vec![batch, max_len],
                right: vec![char_lengths.len(), word_mask.len()],
            }));
        }
        let lengths: Vec<usize> = char_lengths
            .iter()
            .zip(word_mask)
            .map(|(&l, &m)| if m { l } else { 0 })
            .collect();
        let enc = self.encode(f, char_ids, &lengths, max_chars)?;
        Ok(f.tape.reshape(enc, &[batch, max_len, self.output_dim])?)
    }
}
