//! Train, decode, and benchmark pipelines behind the command-line tool.

use std::io::Write;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::autodiff::{BernoulliMasks, Tape};
use crate::config::{parse_config_with_overrides, ModelConfig};
use crate::corpus::{build_alphabets, encode_sentence, make_batches, read_conll, EncodedSentence, ReadMode, Sentence};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, write_decode, NbestList};
use crate::model::{Init, SeqLabeler};
use crate::train::{
    check_compatible, clip_grad_norm, decode_corpus, label_names, load_checkpoint, train_model, EpochRecord, Optimizer,
    TrainData, TrainOptions, TrainReport, CHECKPOINT_FILE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub workers: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { workers: 1 }
    }
}

/// Parses the config file, then `--set` overrides, then an optional seed.
pub fn load_config(path: &Path, overrides: &[String], seed: Option<u64>) -> Result<ModelConfig> {
    let mut all = overrides.to_vec();
    if let Some(s) = seed {
        all.push(format!("seed={s}"));
    }
    parse_config_with_overrides(path, &all)
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str, what: &str) -> Result<&'a PathBuf> {
    p.as_ref()
        .ok_or_else(|| Error::config(format!("{key} must be set for {what}")))
}

fn existing<'a>(p: &'a Option<PathBuf>, key: &str, what: &str) -> Result<&'a PathBuf> {
    let p = required(p, key, what)?;
    if !p.is_file() {
        return Err(Error::config(format!("{key}: file not found: {}", p.display())));
    }
    Ok(p)
}

pub fn checkpoint_path(config: &ModelConfig) -> Result<PathBuf> {
    Ok(required(&config.io.model_dir, "model_dir", "saving or loading a model")?.join(CHECKPOINT_FILE))
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub architecture: String,
    pub checkpoint: PathBuf,
    pub report: TrainReport,
}

/// Reads the configured corpora, trains, and writes checkpoint and logs into `model_dir`.
pub fn run_train(config: &ModelConfig, options: RunOptions, out: &mut dyn Write) -> Result<TrainSummary> {
    let train_path = existing(&config.io.train_dir, "train_dir", "training")?;
    let dev_path = existing(&config.io.dev_dir, "dev_dir", "training")?;
    let test_path = match &config.io.test_dir {
        Some(_) => Some(existing(&config.io.test_dir, "test_dir", "training")?),
        None => None,
    };
    let model_dir = required(&config.io.model_dir, "model_dir", "training")?.clone();

    let data = TrainData {
        train: read_conll(train_path, ReadMode::Train)?,
        dev: read_conll(dev_path, ReadMode::Train)?,
        test: match test_path {
            Some(p) => read_conll(p, ReadMode::Train)?,
            None => Vec::new(),
        },
    };
    let alphabets = build_alphabets(
        &data.train,
        &data.dev,
        &data.test,
        &config.feature_names(),
        config.training.open_label_set,
    )?;
    let model = SeqLabeler::new(config, &alphabets, Init::Full)?;
    let architecture = config.describe();
    let _ = writeln!(out, "{architecture}");
    std::fs::create_dir_all(&model_dir).map_err(|e| Error::io(&model_dir, e))?;

    let mut progress = |r: &EpochRecord| {
        let _ = writeln!(
            out,
            "epoch {}\tloss {:.4}\tdev {:.2}\t{:.2}s",
            r.epoch, r.train_loss, r.dev_metric, r.seconds
        );
        ControlFlow::Continue(())
    };
    let outcome = train_model(
        model,
        &data,
        TrainOptions {
            workers: options.workers,
            output_dir: Some(model_dir.clone()),
            on_epoch: Some(&mut progress),
            monitor: None,
        },
    )?;
    if let Some(best) = outcome.report.best() {
        let _ = writeln!(out, "best epoch {}\t{} {:.2}", best.epoch, outcome.report.metric, best.dev_metric);
    }
    Ok(TrainSummary {
        architecture,
        checkpoint: model_dir.join(CHECKPOINT_FILE),
        report: outcome.report,
    })
}

/// Raw input, optionally with gold labels in the last column.
pub struct DecodeInput {
    pub sentences: Vec<Sentence>,
    pub gold: bool,
}

/// Treats the last column as gold labels when every one of them is a known label.
pub fn read_decode_input(path: &Path, model: &SeqLabeler) -> Result<DecodeInput> {
    if let Ok(sentences) = read_conll(path, ReadMode::Train) {
        let known = sentences
            .iter()
            .flat_map(|s| &s.tokens)
            .all(|t| model.alphabets.label.contains(&t.label));
        if known && !sentences.is_empty() {
            return Ok(DecodeInput { sentences, gold: true });
        }
    }
    Ok(DecodeInput {
        sentences: read_conll(path, ReadMode::Raw)?,
        gold: false,
    })
}

#[derive(Debug, Clone)]
pub struct DecodeSummary {
    pub output: PathBuf,
    pub sentences: usize,
    /// Accuracy and P/R/F1 when the input carried gold labels.
    pub metrics: Option<crate::metrics::Evaluation>,
}

pub fn run_decode(config: &ModelConfig, options: RunOptions, out: &mut dyn Write) -> Result<DecodeSummary> {
    let raw = existing(&config.io.raw_dir, "raw_dir", "decoding")?;
    let output = required(&config.io.decode_dir, "decode_dir", "decoding")?.clone();
    let ckpt = checkpoint_path(config)?;
    if !ckpt.is_file() {
        return Err(Error::Checkpoint(format!("checkpoint not found: {}", ckpt.display())));
    }
    let model = load_checkpoint(&ckpt)?;
    check_compatible(&model, config)?;
    let input = read_decode_input(raw, &model)?;
    let encoded: Vec<EncodedSentence> = input
        .sentences
        .iter()
        .map(|s| encode_sentence(s, &model.alphabets))
        .collect();
    let nbest = config.hyper.nbest;
    let decoded = decode_corpus(&model, &encoded, config.hyper.batch_size, nbest, options.workers)?;
    let labels = label_names(&model, &decoded);
    let lists: Option<Vec<NbestList>> = (nbest > 1).then(|| {
        decoded
            .iter()
            .map(|d| {
                d.nbest
                    .iter()
                    .map(|p| {
                        (
                            p.labels.iter().map(|&y| model.label_name(y).to_string()).collect(),
                            p.prob,
                        )
                    })
                    .collect()
            })
            .collect()
    });
    write_decode(&output, &input.sentences, &labels, lists.as_deref())?;
    let _ = writeln!(out, "{}", model.config.describe());
    let _ = writeln!(out, "decoded {} sentences to {}", input.sentences.len(), output.display());
    let metrics = if input.gold {
        let gold: Vec<Vec<&str>> = input.sentences.iter().map(|s| s.labels()).collect();
        let e = evaluate(&gold, &labels, model.config.hyper.tag_scheme)?;
        let _ = write!(out, "{}", e.report());
        Some(e)
    } else {
        None
    };
    Ok(DecodeSummary {
        output,
        sentences: input.sentences.len(),
        metrics,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct BenchSettings {
    /// Sentences processed per timed repetition.
    pub budget: usize,
    pub repeats: usize,
}

impl Default for BenchSettings {
    fn default() -> Self {
        BenchSettings {
            budget: 200,
            repeats: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub batch_size: usize,
    pub train_mean: f64,
    pub train_sd: f64,
    pub decode_mean: f64,
    pub decode_sd: f64,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

pub fn format_bench(rows: &[BenchRow]) -> String {
    let mut s = String::from("batch_size\ttrain_sent_per_sec\ttrain_sd\tdecode_sent_per_sec\tdecode_sd\n");
    for r in rows {
        s.push_str(&format!(
            "{}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\n",
            r.batch_size, r.train_mean, r.train_sd, r.decode_mean, r.decode_sd
        ));
    }
    s
}

/// Throughput of training steps and decoding for each batch size.
///
/// Uses the configured training file; sentences are cycled to fill the budget.
pub fn run_bench(
    config: &ModelConfig,
    batch_sizes: &[usize],
    settings: BenchSettings,
    out: &mut dyn Write,
) -> Result<Vec<BenchRow>> {
    let path = existing(&config.io.train_dir, "train_dir", "benchmarking")?;
    let sentences = read_conll(path, ReadMode::Train)?;
    if sentences.is_empty() {
        return Err(Error::Contract("benchmark corpus is empty".into()));
    }
    let alphabets = build_alphabets(&sentences, &[], &[], &config.feature_names(), true)?;
    let base = SeqLabeler::new(config, &alphabets, Init::Full)?;
    let pool: Vec<EncodedSentence> = sentences
        .iter()
        .cycle()
        .take(settings.budget.max(1))
        .map(|s| encode_sentence(s, &alphabets))
        .collect();

    let mut rows = Vec::new();
    for &bs in batch_sizes {
        let bs = bs.max(1);
        let batches = make_batches(&pool, bs, false, 0);
        let mut model = base.clone();
        let mut opt = Optimizer::new(config.training.optimizer, config.hyper.momentum, config.hyper.l2, &model.store);
        let mut masks = BernoulliMasks::new(config.hyper.seed);
        let mut train_step = |model: &mut SeqLabeler, batch| -> Result<()> {
            let grads = {
                let mut tape = Tape::with_params(&model.store);
                let em = model.emissions(&mut tape, batch, Some(&mut masks))?;
                let loss = model.loss(&mut tape, batch, em)?;
                tape.backward(loss)?;
                tape.param_grads()
            };
            model.store.accumulate(&grads);
            clip_grad_norm(&mut model.store, config.training.clip);
            opt.step(&mut model.store, config.hyper.lr)
        };
        // Warm-up pass over one batch of each mode.
        train_step(&mut model, &batches[0])?;
        model.decode(&batches[0], config.hyper.nbest)?;

        let (mut train_rates, mut decode_rates) = (Vec::new(), Vec::new());
        for _ in 0..settings.repeats.max(1) {
            let t = Instant::now();
            for b in &batches {
                train_step(&mut model, b)?;
            }
            train_rates.push(pool.len() as f64 / t.elapsed().as_secs_f64().max(1e-9));
            let t = Instant::now();
            for b in &batches {
                model.decode(b, config.hyper.nbest)?;
            }
            decode_rates.push(pool.len() as f64 / t.elapsed().as_secs_f64().max(1e-9));
        }
        let (train_mean, train_sd) = mean_sd(&train_rates);
        let (decode_mean, decode_sd) = mean_sd(&decode_rates);
        rows.push(BenchRow {
            batch_size: bs,
            train_mean,
            train_sd,
            decode_mean,
            decode_sd,
        });
    }
    let _ = write!(out, "{}", format_bench(&rows));
    Ok(rows)
}
