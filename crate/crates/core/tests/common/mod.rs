#![allow(dead_code)]

use std::path::PathBuf;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use seqtag::config::{parse_config_with_overrides, ModelConfig};
use seqtag::corpus::{build_alphabets, read_conll, Alphabets, ReadMode, Sentence};
use seqtag::inference::Lattice;

pub const ARCHITECTURES: [&str; 6] = [
    "nochar_wcnn_crf",
    "nochar_wlstm_crf",
    "clstm_wcnn_crf",
    "clstm_wlstm_crf",
    "ccnn_wcnn_crf",
    "ccnn_wlstm_crf",
];

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn toy_dir() -> PathBuf {
    fixtures().join("toy")
}

pub fn config_path(name: &str) -> PathBuf {
    fixtures().join("configs").join(format!("{name}.config"))
}

pub fn arch_config(name: &str, overrides: &[&str]) -> ModelConfig {
    let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    parse_config_with_overrides(config_path(name), &o).unwrap()
}

/// Small dimensions so finite-difference checks stay fast.
pub const TINY: [&str; 6] = [
    "word_emb_dim=5",
    "char_emb_dim=3",
    "char_hidden_dim=4",
    "hidden_dim=6",
    "dropout=0",
    "ave_batch_loss=False",
];

pub fn toy_split(name: &str) -> Vec<Sentence> {
    read_conll(toy_dir().join(name), ReadMode::Train).unwrap()
}

pub fn toy_alphabets(config: &ModelConfig) -> (Vec<Sentence>, Vec<Sentence>, Vec<Sentence>, Alphabets) {
    let train = toy_split("train.bio");
    let dev = toy_split("dev.bio");
    let test = toy_split("test.bio");
    let a = build_alphabets(&train, &dev, &test, &config.feature_names(), config.training.open_label_set).unwrap();
    (train, dev, test, a)
}

pub fn random_lattice(rng: &mut ChaCha8Rng, k: usize, len: usize, scale: f64) -> Lattice {
    let em: Vec<f64> = (0..len * k).map(|_| rng.gen_range(-scale..scale)).collect();
    let tr: Vec<f64> = (0..(k + 2) * (k + 2)).map(|_| rng.gen_range(-scale..scale)).collect();
    Lattice::single(k, em, tr).unwrap()
}

/// Scores drawn from a few integers so that exact ties are common.
pub fn tied_lattice(rng: &mut ChaCha8Rng, k: usize, len: usize) -> Lattice {
    let em: Vec<f64> = (0..len * k).map(|_| rng.gen_range(0..3) as f64).collect();
    let tr: Vec<f64> = (0..(k + 2) * (k + 2)).map(|_| rng.gen_range(0..2) as f64).collect();
    Lattice::single(k, em, tr).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

use seqtag::autodiff::{GradCheck, GradReport, Tape};
use seqtag::corpus::{encode_sentence, Batch, EncodedSentence};
use seqtag::model::{Init, SeqLabeler};

pub fn tiny_model(name: &str, extra: &[&str]) -> (SeqLabeler, Vec<EncodedSentence>) {
    let mut o: Vec<&str> = TINY.to_vec();
    o.extend_from_slice(extra);
    let config = arch_config(name, &o);
    let (train, _, _, alphabets) = toy_alphabets(&config);
    let model = SeqLabeler::new(&config, &alphabets, Init::Full).unwrap();
    let encoded = train.iter().map(|s| encode_sentence(s, &alphabets)).collect();
    (model, encoded)
}

pub fn batch_of(sentences: &[EncodedSentence], indices: &[usize]) -> Batch {
    let refs: Vec<&EncodedSentence> = indices.iter().map(|&i| &sentences[i]).collect();
    Batch::from_sentences(&refs, indices)
}

/// Finite-difference check of every coordinate of every parameter, dropout off.
pub fn model_gradcheck(model: &SeqLabeler, batch: &Batch) -> GradReport {
    let analytic = {
        let mut tape = Tape::with_params(&model.store);
        let em = model.emissions(&mut tape, batch, None).unwrap();
        let loss = model.loss(&mut tape, batch, em).unwrap();
        tape.backward(loss).unwrap();
        tape.param_grads()
    };
    let mut store = model.store.clone();
    GradCheck::default().check_params(&mut store, &analytic, None, |s| {
        let mut tape = Tape::with_params(s);
        let em = model.emissions(&mut tape, batch, None).unwrap();
        let loss = model.loss(&mut tape, batch, em).unwrap();
        tape.value(loss).item()
    })
}

/// Emissions of row `row` over its real length.
pub fn emissions_of(model: &SeqLabeler, batch: &Batch, row: usize) -> Vec<f64> {
    let mut tape = Tape::with_params(&model.store);
    let em = model.emissions(&mut tape, batch, None).unwrap();
    let k = model.num_labels();
    let start = row * batch.max_len * k;
    tape.value(em).data()[start..start + batch.word_lengths[row] * k].to_vec()
}
