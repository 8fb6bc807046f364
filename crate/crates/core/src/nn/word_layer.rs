use rand::Rng;

use super::cnn::ConvStack;
use super::rnn::{BiRnn, RnnKind};
use super::Forward;
use crate::autodiff::{ParamId, ParamStore, Tensor, TensorError, Var};
use crate::config::SeqKind;
use crate::corpus::{random_embedding, Batch};
use crate::error::Result;

/// Per-position input: word embedding ⊕ char encoding ⊕ feature embeddings.
#[derive(Debug, Clone)]
pub struct WordRepresentation {
    pub word_embeddings: ParamId,
    pub word_emb_dim: usize,
    pub char_dim: usize,
    /// `(feature name, table, emb_size)` in declaration order.
    pub feature_tables: Vec<(String, ParamId, usize)>,
}

impl WordRepresentation {
    pub fn new(
        store: &mut ParamStore,
        word_table: Tensor,
        char_dim: usize,
        features: Vec<(String, Tensor)>,
    ) -> Self {
        let word_emb_dim = word_table.shape()[1];
        let word_embeddings = store.add("word.embeddings", word_table);
        let feature_tables = features
            .into_iter()
            .map(|(name, table)| {
                let dim = table.shape()[1];
                let id = store.add(format!("feature.{name}.embeddings"), table);
                (name, id, dim)
            })
            .collect();
        WordRepresentation {
            word_embeddings,
            word_emb_dim,
            char_dim,
            feature_tables,
        }
    }

    pub fn random(
        store: &mut ParamStore,
        vocab: usize,
        word_emb_dim: usize,
        char_dim: usize,
        features: &[(String, usize, usize)],
        rng: &mut impl Rng,
    ) -> Self {
        let word = random_embedding(vocab, word_emb_dim, rng);
        let feats = features
            .iter()
            .map(|(n, v, d)| (n.clone(), random_embedding(*v, *d, rng)))
            .collect();
        Self::new(store, word, char_dim, feats)
    }

    pub fn width(&self) -> usize {
        self.word_emb_dim + self.char_dim + self.feature_tables.iter().map(|f| f.2).sum::<usize>()
    }

    /// `[B, L, width]`; `chars` is `[B, L, char_dim]` when a char encoder is configured.
    pub fn forward(&self, f: &mut Forward, batch: &Batch, chars: Option<Var>) -> Result<Var> {
        let (b, l) = (batch.batch_size, batch.max_len);
        if batch.feature_ids.len() != self.feature_tables.len() {
            return Err(TensorError::Dimension {
                op: "build_word_input",
                left: vec![self.feature_tables.len()],
                right: vec![batch.feature_ids.len()],
            }
            .into());
        }
        let table = f.tape.param(self.word_embeddings);
        let mut parts = vec![f.tape.lookup(table, &batch.word_ids)?];
        match (chars, self.char_dim) {
            (Some(c), d) if d > 0 => parts.push(f.tape.reshape(c, &[b * l, d])?),
            (None, 0) => {}
            _ => {
                return Err(TensorError::Contract(
                    "char encodings must be given exactly when a char encoder is configured".into(),
                )
                .into())
            }
        }
        for ((_, id, _), ids) in self.feature_tables.iter().zip(&batch.feature_ids) {
            let t = f.tape.param(*id);
            parts.push(f.tape.lookup(t, ids)?);
        }
        let rep = f.tape.concat(&parts, 1)?;
        let rep = f.dropout(rep)?;
        let rep = f.zero_rows(rep, &batch.word_mask)?;
        Ok(f.tape.reshape(rep, &[b, l, self.width()])?)
    }
}

#[derive(Debug, Clone)]
enum Stack {
    Rnn(Vec<BiRnn>),
    Cnn(ConvStack),
}

/// Contextual word features; output width is `hidden_dim` for every kind.
#[derive(Debug, Clone)]
pub struct WordEncoder {
    pub kind: SeqKind,
    pub hidden_dim: usize,
    stack: Stack,
}

impl WordEncoder {
    pub fn new(
        store: &mut ParamStore,
        kind: SeqKind,
        layers: usize,
        input: usize,
        hidden_dim: usize,
        window: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let stack = match kind {
            SeqKind::Lstm | SeqKind::Gru => {
                let rk = if kind == SeqKind::Lstm { RnnKind::Lstm } else { RnnKind::Gru };
                Stack::Rnn(
                    (0..layers)
                        .map(|i| {
                            let d_in = if i == 0 { input } else { hidden_dim };
                            BiRnn::new(store, &format!("word.rnn.{i}"), rk, d_in, hidden_dim / 2, rng)
                        })
                        .collect(),
                )
            }
            SeqKind::Cnn => Stack::Cnn(ConvStack::new(store, "word.cnn", layers, window, input, hidden_dim, rng)),
        };
        WordEncoder {
            kind,
            hidden_dim,
            stack,
        }
    }

    /// `input` is `[B, L, d]`; returns `[B, L, hidden_dim]`, zero at masked positions.
    pub fn forward(&self, f: &mut Forward, input: Var, mask: &[bool]) -> Result<Var> {
        match &self.stack {
            Stack::Rnn(layers) => {
                let mut h = input;
                for layer in layers {
                    let out = layer.run(f, h, mask)?;
                    h = f.dropout(out.sequence)?;
                }
                Ok(h)
            }
            Stack::Cnn(stack) => stack.forward(f, input, mask),
        }
    }

    /// Bidirectional layers, empty for CNN.
    pub fn rnn_layers(&self) -> &[BiRnn] {
        match &self.stack {
            Stack::Rnn(l) => l,
            Stack::Cnn(_) => &[],
        }
    }
}
