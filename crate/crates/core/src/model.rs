//! A complete labeler assembled from a [`ModelConfig`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{MaskSource, ParamId, ParamStore, Tape, Tensor, TensorError, Var};
use crate::config::{BatchAverage, ModelConfig};
use crate::corpus::{load_pretrained, random_embedding, Alphabets, Batch, PAD};
use crate::error::{Error, Result};
use crate::inference::{
    argmax_rows, crf_nll, lattice_from_tape, project, softmax_loss, Lattice, Reduction, ScoredPath,
};
use crate::nn::{CharEncoder, Forward, Linear, WordEncoder, WordRepresentation};

/// Whether to read pretrained embedding files while building.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Random tables plus any configured pretrained files.
    Full,
    /// Random tables only; used before loading a checkpoint.
    RandomOnly,
}

#[derive(Debug, Clone)]
pub struct SeqLabeler {
    pub config: ModelConfig,
    pub alphabets: Alphabets,
    pub store: ParamStore,
    pub char_encoder: Option<CharEncoder>,
    pub representation: WordRepresentation,
    pub encoder: WordEncoder,
    pub output: Linear,
    pub transitions: Option<ParamId>,
}

/// Decoder output for one sentence, in model label indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub labels: Vec<usize>,
    /// Best-first candidates; empty unless n-best decoding was requested.
    pub nbest: Vec<ScoredPath>,
}

impl SeqLabeler {
    pub fn new(config: &ModelConfig, alphabets: &Alphabets, init: Init) -> Result<Self> {
        let h = &config.hyper;
        let mut rng = ChaCha8Rng::seed_from_u64(h.seed);
        let mut store = ParamStore::new();
        let k = alphabets.num_labels();
        if k == 0 {
            return Err(Error::Contract("label alphabet is empty".into()));
        }

        let word_table = match (&config.io.word_emb_dir, init) {
            (Some(path), Init::Full) => load_pretrained(path, &alphabets.word, h.word_emb_dim, &mut rng)?.0,
            _ => random_embedding(alphabets.word.len(), h.word_emb_dim, &mut rng),
        };
        let char_encoder = match config.char_seq_feature.seq_kind() {
            Some(kind) => {
                let enc = CharEncoder::new(
                    &mut store,
                    kind,
                    alphabets.char.len(),
                    h.char_emb_dim,
                    h.char_hidden_dim,
                    h.char_window,
                    &mut rng,
                );
                if let (Some(path), Init::Full) = (&config.io.char_emb_dir, init) {
                    let (table, _) = load_pretrained(path, &alphabets.char, h.char_emb_dim, &mut rng)?;
                    store.get_mut(enc.embeddings).value = table;
                }
                Some(enc)
            }
            None => None,
        };
        let mut features = Vec::new();
        for spec in &config.features {
            let alphabet = alphabets
                .feature(&spec.name)
                .ok_or_else(|| Error::Contract(format!("no alphabet for feature [{}]", spec.name)))?;
            let table = match (&spec.emb_dir, init) {
                (Some(path), Init::Full) => load_pretrained(path, alphabet, spec.emb_size, &mut rng)?.0,
                _ => random_embedding(alphabet.len(), spec.emb_size, &mut rng),
            };
            features.push((spec.name.clone(), table));
        }
        let char_dim = char_encoder.as_ref().map_or(0, |c| c.output_dim);
        let representation = WordRepresentation::new(&mut store, word_table, char_dim, features);
        let encoder = WordEncoder::new(
            &mut store,
            config.word_seq_feature,
            config.word_seq_layer,
            representation.width(),
            h.hidden_dim,
            h.word_window,
            &mut rng,
        );
        let output = Linear::new(&mut store, "output", h.hidden_dim, k, &mut rng);
        let transitions = config
            .use_crf
            .then(|| store.add("crf.transitions", Tensor::zeros(&[k + 2, k + 2])));
        Ok(SeqLabeler {
            config: config.clone(),
            alphabets: alphabets.clone(),
            store,
            char_encoder,
            representation,
            encoder,
            output,
            transitions,
        })
    }

    pub fn num_labels(&self) -> usize {
        self.alphabets.num_labels()
    }

    pub fn label_name(&self, index: usize) -> &str {
        self.alphabets.label.name(index + 1).unwrap_or("O")
    }

    /// Emission scores `[B, L, K]`. Training mode when `masks` is given.
    pub fn emissions(&self, tape: &mut Tape, batch: &Batch, masks: Option<&mut dyn MaskSource>) -> Result<Var> {
        let mut f = match masks {
            Some(m) => Forward::train(tape, m, self.config.hyper.dropout),
            None => Forward::eval(tape),
        };
        let chars = match &self.char_encoder {
            Some(enc) => Some(enc.encode_batch(
                &mut f,
                &batch.char_ids,
                &batch.char_lengths,
                &batch.word_mask,
                batch.batch_size,
                batch.max_len,
                batch.max_chars,
            )?),
            None => None,
        };
        let input = self.representation.forward(&mut f, batch, chars)?;
        let hidden = self.encoder.forward(&mut f, input, &batch.word_mask)?;
        project(f.tape, &self.output, hidden)
    }

    /// Gold labels per sentence as model indices over each real length.
    pub fn gold(&self, batch: &Batch) -> Result<Vec<Vec<usize>>> {
        let mut out = Vec::with_capacity(batch.batch_size);
        for b in 0..batch.batch_size {
            let row = &batch.label_ids[b * batch.max_len..b * batch.max_len + batch.word_lengths[b]];
            let mut labels = Vec::with_capacity(row.len());
            for &id in row {
                if id == PAD {
                    return Err(Error::Contract(format!(
                        "sentence {} has a token without a known gold label",
                        batch.sentence_index[b]
                    )));
                }
                labels.push(id - 1);
            }
            out.push(labels);
        }
        Ok(out)
    }

    /// Training loss for a batch, averaged per the training settings.
    pub fn loss(&self, tape: &mut Tape, batch: &Batch, emissions: Var) -> Result<Var> {
        let gold = self.gold(batch)?;
        let total = match self.transitions {
            Some(id) => {
                let tr = tape.param(id);
                crf_nll(tape, emissions, tr, &batch.word_mask, &gold)?
            }
            None => {
                let flat: Vec<usize> = (0..batch.batch_size * batch.max_len)
                    .map(|i| batch.label_ids[i].saturating_sub(1))
                    .collect();
                softmax_loss(tape, emissions, &flat, &batch.word_mask, Reduction::Sum)?
            }
        };
        let t = &self.config.training;
        if !t.ave_batch_loss {
            return Ok(total);
        }
        let denom = match t.ave_batch_loss_by {
            BatchAverage::Batch => batch.batch_size,
            BatchAverage::Token => batch.num_tokens(),
        };
        Ok(tape.scale(total, 1.0 / denom.max(1) as f64))
    }

    /// Forward pass plus loss, evaluation mode unless `masks` is given.
    pub fn batch_loss(&self, batch: &Batch, masks: Option<&mut dyn MaskSource>) -> Result<f64> {
        let mut tape = Tape::with_params(&self.store);
        let em = self.emissions(&mut tape, batch, masks)?;
        let loss = self.loss(&mut tape, batch, em)?;
        Ok(tape.value(loss).item())
    }

    /// Decodes every sentence of a batch; `nbest > 1` also fills candidate lists.
    pub fn decode(&self, batch: &Batch, nbest: usize) -> Result<Vec<Decoded>> {
        let mut tape = Tape::with_params(&self.store);
        let em = self.emissions(&mut tape, batch, None)?;
        let k = self.num_labels();
        let lattice = match self.transitions {
            Some(id) => {
                let tr = tape.param(id);
                lattice_from_tape(&tape, em, tr, &batch.word_mask)?
            }
            None => {
                if nbest <= 1 {
                    let arg = argmax_rows(tape.value(em).data(), k);
                    return Ok((0..batch.batch_size)
                        .map(|b| Decoded {
                            labels: arg[b * batch.max_len..b * batch.max_len + batch.word_lengths[b]].to_vec(),
                            nbest: Vec::new(),
                        })
                        .collect());
                }
                softmax_lattice(tape.value(em), &batch.word_mask)?
            }
        };
        Ok((0..batch.batch_size)
            .map(|b| {
                if nbest <= 1 {
                    let best = lattice.nbest(b, 1).into_iter().next();
                    Decoded {
                        labels: best.map(|p| p.labels).unwrap_or_default(),
                        nbest: Vec::new(),
                    }
                } else {
                    let list = lattice.nbest(b, nbest);
                    Decoded {
                        labels: list.first().map(|p| p.labels.clone()).unwrap_or_default(),
                        nbest: list,
                    }
                }
            })
            .collect())
    }
}

/// Per-token log-probabilities with zero transitions, so path scores are
/// joint log-probabilities of independent token choices and `logZ = 0`.
fn softmax_lattice(emissions: &Tensor, mask: &[bool]) -> Result<Lattice> {
    let shape = emissions.shape();
    if shape.len() != 3 {
        return Err(TensorError::Dimension {
            op: "softmax_lattice",
            left: vec![0, 0, 0],
            right: shape.to_vec(),
        }
        .into());
    }
    let k = shape[2];
    let mut logp = emissions.data().to_vec();
    for row in logp.chunks_mut(k) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        row.iter_mut().for_each(|v| *v -= lse);
    }
    Lattice::new(shape[0], shape[1], k, logp, mask.to_vec(), vec![0.0; (k + 2) * (k + 2)])
}
