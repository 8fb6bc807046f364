//! Optimization loop, evaluation, and checkpoints.

mod checkpoint;
mod optim;

pub use checkpoint::{
    check_compatible, checkpoint_from_str, checkpoint_to_string, load_checkpoint, save_checkpoint,
    CHECKPOINT_VERSION,
};
pub use optim::{clip_grad_norm, decayed_lr, Optimizer};

use std::fmt::Write as _;
use std::ops::ControlFlow;
use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;

use crate::autodiff::{BernoulliMasks, Tape};
use crate::config::ModelConfig;
use crate::corpus::{encode_sentence, make_batches, Alphabets, Batch, EncodedSentence, Sentence};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, Evaluation};
use crate::model::{Decoded, Init, SeqLabeler};

pub const CHECKPOINT_FILE: &str = "model.json";
pub const REPORT_FILE: &str = "train_report.jsonl";
pub const LOSS_LOG_FILE: &str = "loss.log";

#[derive(Debug, Clone, Default)]
pub struct TrainData {
    pub train: Vec<Sentence>,
    pub dev: Vec<Sentence>,
    pub test: Vec<Sentence>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub dev_metric: f64,
    pub test_metric: Option<f64>,
    /// Token accuracy on [`TrainOptions::monitor`], when given.
    pub monitor_accuracy: Option<f64>,
    pub seconds: f64,
    pub sentences_per_sec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    /// `f1` or `accuracy`.
    pub metric: String,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

impl TrainReport {
    /// One JSON object per epoch.
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for e in &self.epochs {
            let _ = writeln!(s, "{}", serde_json::to_string(e).expect("epoch record serializes"));
        }
        s
    }

    /// Timing-free per-epoch log, identical across runs with the same seed.
    pub fn loss_log(&self) -> String {
        let mut s = String::new();
        for e in &self.epochs {
            let _ = writeln!(
                s,
                "{}\t{:.10e}\t{}\t{:.4}",
                e.epoch, e.train_loss, self.metric, e.dev_metric
            );
        }
        s
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        self.best_epoch.map(|i| &self.epochs[i])
    }
}

pub struct TrainOptions<'a> {
    /// Evaluation threads.
    pub workers: usize,
    /// Directory receiving checkpoint, report, and loss log.
    pub output_dir: Option<PathBuf>,
    /// Called after every epoch; `Break` ends training early.
    pub on_epoch: Option<&'a mut dyn FnMut(&EpochRecord) -> ControlFlow<()>>,
    /// Extra labelled sentences scored by token accuracy after every epoch.
    pub monitor: Option<&'a [Sentence]>,
}

impl Default for TrainOptions<'_> {
    fn default() -> Self {
        TrainOptions {
            workers: 1,
            output_dir: None,
            on_epoch: None,
            monitor: None,
        }
    }
}

pub struct TrainOutcome {
    /// Parameters from the best dev epoch (the final ones if dev never improved).
    pub model: SeqLabeler,
    pub report: TrainReport,
}

/// Entity F1 when the labels encode segments, token accuracy otherwise.
pub fn selection_metric(alphabets: &Alphabets) -> &'static str {
    let segmented = alphabets.label.user_entries().iter().any(|l| {
        let mut c = l.chars();
        matches!((c.next(), c.next()), (Some('B' | 'I' | 'E' | 'S'), Some('-')))
    });
    if segmented {
        "f1"
    } else {
        "accuracy"
    }
}

fn metric_value(e: &Evaluation, metric: &str) -> f64 {
    if metric == "f1" {
        e.prf.f1
    } else {
        e.accuracy
    }
}

/// Decodes sentences in batches of `batch_size`, fanning batches over
/// `workers` threads. Results are in input order and independent of `workers`.
pub fn decode_corpus(
    model: &SeqLabeler,
    sentences: &[EncodedSentence],
    batch_size: usize,
    nbest: usize,
    workers: usize,
) -> Result<Vec<Decoded>> {
    let batches = make_batches(sentences, batch_size.max(1), false, 0);
    let workers = workers.clamp(1, batches.len().max(1));
    let decode = |chunk: &[Batch]| -> Result<Vec<(usize, Decoded)>> {
        let mut out = Vec::new();
        for b in chunk {
            for (row, d) in model.decode(b, nbest)?.into_iter().enumerate() {
                out.push((b.sentence_index[row], d));
            }
        }
        Ok(out)
    };
    let pieces: Vec<Result<Vec<(usize, Decoded)>>> = if workers == 1 {
        vec![decode(&batches)]
    } else {
        let per = batches.len().div_ceil(workers);
        std::thread::scope(|s| {
            let handles: Vec<_> = batches.chunks(per).map(|c| s.spawn(move || decode(c))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("decode worker panicked"))
                .collect()
        })
    };
    let mut slots: Vec<Option<Decoded>> = vec![None; sentences.len()];
    for piece in pieces {
        for (i, d) in piece? {
            slots[i] = Some(d);
        }
    }
    Ok(slots.into_iter().map(|d| d.expect("every sentence decoded")).collect())
}

pub fn label_names(model: &SeqLabeler, decoded: &[Decoded]) -> Vec<Vec<String>> {
    decoded
        .iter()
        .map(|d| d.labels.iter().map(|&y| model.label_name(y).to_string()).collect())
        .collect()
}

/// Decodes and scores labelled sentences.
pub fn evaluate_model(model: &SeqLabeler, sentences: &[Sentence], workers: usize) -> Result<Evaluation> {
    let encoded: Vec<EncodedSentence> = sentences.iter().map(|s| encode_sentence(s, &model.alphabets)).collect();
    let decoded = decode_corpus(model, &encoded, model.config.hyper.batch_size, 1, workers)?;
    let pred = label_names(model, &decoded);
    let gold: Vec<Vec<&str>> = sentences.iter().map(|s| s.labels()).collect();
    evaluate(&gold, &pred, model.config.hyper.tag_scheme)
}

fn mix_seed(seed: u64, epoch: usize, stream: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((epoch as u64).wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(stream)
}

/// Trains a fresh model built from `config` and `alphabets`.
pub fn train(
    config: &ModelConfig,
    alphabets: &Alphabets,
    data: &TrainData,
    options: TrainOptions,
) -> Result<TrainOutcome> {
    let model = SeqLabeler::new(config, alphabets, Init::Full)?;
    train_model(model, data, options)
}

/// Trains `model` in place according to its config.
pub fn train_model(mut model: SeqLabeler, data: &TrainData, mut options: TrainOptions) -> Result<TrainOutcome> {
    let config = model.config.clone();
    let h = &config.hyper;
    if data.train.is_empty() {
        return Err(Error::Contract("training set is empty".into()));
    }
    let metric = selection_metric(&model.alphabets).to_string();
    let encoded: Vec<EncodedSentence> = data
        .train
        .iter()
        .map(|s| encode_sentence(s, &model.alphabets))
        .collect();
    let mut opt = Optimizer::new(config.training.optimizer, h.momentum, h.l2, &model.store);
    let mut report = TrainReport {
        metric: metric.clone(),
        epochs: Vec::new(),
        best_epoch: None,
    };
    let mut best: Option<SeqLabeler> = None;
    let mut best_score = f64::NEG_INFINITY;

    for epoch in 0..h.epochs {
        let start = Instant::now();
        let lr = opt.epoch_lr(h.lr, h.lr_decay, epoch);
        let batches = make_batches(
            &encoded,
            h.batch_size,
            config.training.train_shuffle,
            mix_seed(h.seed, epoch, 1),
        );
        let mut masks = BernoulliMasks::new(mix_seed(h.seed, epoch, 2));
        let mut epoch_loss = 0.0;
        for (bi, batch) in batches.iter().enumerate() {
            let (value, grads) = {
                let mut tape = Tape::with_params(&model.store);
                let masks = (h.dropout > 0.0).then_some(&mut masks as &mut dyn crate::autodiff::MaskSource);
                let em = model.emissions(&mut tape, batch, masks)?;
                let loss = model.loss(&mut tape, batch, em)?;
                let value = tape.value(loss).item();
                if !value.is_finite() {
                    return Err(Error::NonFinite {
                        epoch,
                        batch: bi,
                        value,
                    });
                }
                tape.backward(loss)?;
                (value, tape.param_grads())
            };
            epoch_loss += value;
            model.store.accumulate(&grads);
            clip_grad_norm(&mut model.store, config.training.clip);
            opt.step(&mut model.store, lr)?;
        }
        let train_secs = start.elapsed().as_secs_f64();

        let dev_metric = if data.dev.is_empty() {
            f64::NAN
        } else {
            metric_value(&evaluate_model(&model, &data.dev, options.workers)?, &metric)
        };
        let test_metric = if data.test.is_empty() {
            None
        } else {
            Some(metric_value(&evaluate_model(&model, &data.test, options.workers)?, &metric))
        };
        let monitor_accuracy = match options.monitor {
            Some(sents) => Some(evaluate_model(&model, sents, options.workers)?.accuracy),
            None => None,
        };
        let record = EpochRecord {
            epoch,
            lr,
            train_loss: epoch_loss,
            dev_metric,
            test_metric,
            monitor_accuracy,
            seconds: start.elapsed().as_secs_f64(),
            sentences_per_sec: data.train.len() as f64 / train_secs.max(1e-12),
        };
        if dev_metric > best_score {
            best_score = dev_metric;
            report.best_epoch = Some(epoch);
            best = Some(model.clone());
            if let Some(dir) = &options.output_dir {
                save_checkpoint(&model, &dir.join(CHECKPOINT_FILE))?;
            }
        }
        let flow = match options.on_epoch.as_deref_mut() {
            Some(cb) => cb(&record),
            None => ControlFlow::Continue(()),
        };
        report.epochs.push(record);
        if flow.is_break() {
            break;
        }
    }

    let model = match best {
        Some(m) => m,
        None => {
            if let Some(dir) = &options.output_dir {
                save_checkpoint(&model, &dir.join(CHECKPOINT_FILE))?;
            }
            model
        }
    };
    if let Some(dir) = &options.output_dir {
        for (name, text) in [(REPORT_FILE, report.to_jsonl()), (LOSS_LOG_FILE, report.loss_log())] {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(TrainOutcome { model, report })
}

/// Fails unless `train_dir` and `dev_dir` name existing files.
pub fn require_training_paths(config: &ModelConfig) -> Result<()> {
    for (key, p) in [("train_dir", &config.io.train_dir), ("dev_dir", &config.io.dev_dir)] {
        match p {
            None => return Err(Error::config(format!("{key} must be set for training"))),
            Some(p) if !p.is_file() => {
                return Err(Error::config(format!("{key}: file not found: {}", p.display())))
            }
            _ => {}
        }
    }
    Ok(())
}
