//! Acceptance checks, one line per criterion. Runs as its own binary so the
//! lines are visible in plain `cargo test` output.

mod common;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::ControlFlow;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::Rng;
use seqtag::app::{run_bench, run_decode, run_train, BenchSettings, RunOptions};
use seqtag::config::{parse_config, parse_config_str, parse_config_with_overrides, CharKind, ModelConfig, SeqKind, TagScheme};
use seqtag::corpus::{encode_sentence, Sentence};
use seqtag::fixtures::{enumerate_paths, format_conll, generate_toy, TOY_LABELS};
use seqtag::inference::Lattice;
use seqtag::metrics::{extract_segments, oracle_at_n, segments_to_labels};
use seqtag::model::{Init, SeqLabeler};
use seqtag::train::{decode_corpus, train_model, EpochRecord, TrainData, TrainOptions};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<f64, String> {
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < limit.as_secs_f64(), || format!("took {secs:.1}s, limit {}s", limit.as_secs()))?;
    Ok(secs)
}

fn config(name: &str, overrides: &[String]) -> ModelConfig {
    parse_config_with_overrides(common::config_path(name), overrides).unwrap()
}

fn lattices() -> Vec<Lattice> {
    let mut r = common::rng(2024);
    (0..200)
        .map(|_| {
            let k = r.gen_range(1..=4);
            let len = r.gen_range(1..=5);
            common::random_lattice(&mut r, k, len, 3.0)
        })
        .collect()
}

fn partition_exactness() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for lat in lattices() {
        let err = (lat.log_partition(0).unwrap() - enumerate_paths(&lat, 0).unwrap().log_z).abs();
        worst = worst.max(err);
    }
    let secs = within(start, Duration::from_secs(10))?;
    ensure(worst < 1e-8, || format!("max |error| {worst:e}"))?;
    Ok(format!("200 lattices, max |error| {worst:.1e}, {secs:.2}s"))
}

fn viterbi_exactness() -> Outcome {
    for (i, lat) in lattices().iter().enumerate() {
        let all = enumerate_paths(lat, 0).unwrap();
        let v = &lat.viterbi()[0];
        ensure(v.labels == all.best().0 && v.score == all.best().1, || format!("lattice {i} differs"))?;
    }
    Ok("200 lattices match the enumeration argmax".into())
}

fn nbest_exactness() -> Outcome {
    let mut r = common::rng(77);
    let mut lists = 0;
    let mut worst_sum = 0.0f64;
    for k in 1..=3 {
        for len in 1..=4 {
            for trial in 0..4 {
                let lat = if trial % 2 == 0 {
                    common::tied_lattice(&mut r, k, len)
                } else {
                    common::random_lattice(&mut r, k, len, 2.0)
                };
                let all = enumerate_paths(&lat, 0).unwrap();
                let total = all.paths.len();
                for n in 1..=total {
                    let got: Vec<(Vec<usize>, f64)> = lat.nbest(0, n).into_iter().map(|p| (p.labels, p.score)).collect();
                    ensure(got == all.top(n), || format!("K={k} L={len} n={n} differs"))?;
                    lists += 1;
                }
                let sum: f64 = lat.nbest(0, total).iter().map(|p| p.prob).sum();
                worst_sum = worst_sum.max((sum - 1.0).abs());
                ensure(lat.nbest(0, 1)[0] == lat.viterbi()[0], || format!("K={k} L={len} n=1 is not Viterbi"))?;
            }
        }
    }
    ensure(worst_sum <= 1e-10, || format!("probabilities off by {worst_sum:e}"))?;
    Ok(format!("{lists} lists exact, max |sum-1| {worst_sum:.1e}"))
}

fn gradient_integrity() -> Outcome {
    let start = Instant::now();
    let mut checked = 0;
    let mut worst = 0.0f64;
    let mut largest = 0.0f64;
    for name in common::ARCHITECTURES {
        let (m, sents) = common::tiny_model(name, &[]);
        let batch = common::batch_of(&sents, &[2, 5]);
        let report = common::model_gradcheck(&m, &batch);
        ensure(report.passed(), || {
            let first = &report.mismatches[0];
            format!("{name}: {} mismatches, first {}[{}]", report.mismatches.len(), first.param, first.index)
        })?;
        let groups = m.store.iter().count();
        ensure(report.checked == m.store.iter().map(|(_, p)| p.value.len()).sum::<usize>(), || {
            format!("{name}: not every coordinate of {groups} groups was checked")
        })?;
        checked += report.checked;
        worst = worst.max(report.max_rel_error);
        largest = largest.max(report.max_abs_grad);
    }
    let secs = within(start, Duration::from_secs(120))?;
    Ok(format!(
        "{checked} coordinates, max relative error {worst:.1e}, largest gradient {largest:.2}, {secs:.1}s"
    ))
}

fn padding_invariance() -> Outcome {
    let mut r = common::rng(5);
    let mut worst = 0.0f64;
    let mut rows = 0;
    for name in common::ARCHITECTURES {
        let cfg = config(name, &["ave_batch_loss=False".into()]);
        let (train, _, _, alphabets) = common::toy_alphabets(&cfg);
        let m = SeqLabeler::new(&cfg, &alphabets, Init::Full).unwrap();
        let sents: Vec<_> = train.iter().map(|s| encode_sentence(s, &alphabets)).collect();
        let k = m.num_labels();
        let tr = m.store.value(m.transitions.unwrap()).data().to_vec();
        for size in 2..=8 {
            let mut idx: Vec<usize> = (0..sents.len()).collect();
            for i in (1..idx.len()).rev() {
                idx.swap(i, r.gen_range(0..=i));
            }
            idx.truncate(size);
            let batch = common::batch_of(&sents, &idx);
            let wide = batch.padded_to(batch.max_len + 4, batch.max_chars + 3);
            for (row, &i) in idx.iter().enumerate() {
                let single = common::batch_of(&sents, &[i]);
                let alone_loss = m.batch_loss(&single, None).unwrap();
                let alone_labels = m.decode(&single, 1).unwrap()[0].labels.clone();
                let gold = m.gold(&single).unwrap();
                for b in [&batch, &wide] {
                    let em = common::emissions_of(&m, b, row);
                    let loss = Lattice::single(k, em, tr.clone()).unwrap().nll(&gold).unwrap();
                    worst = worst.max((loss - alone_loss).abs());
                    let labels = &m.decode(b, 1).unwrap()[row].labels;
                    ensure(labels == &alone_labels, || format!("{name}: size {size} sentence {i} labels differ"))?;
                }
                rows += 1;
            }
            let total: f64 = idx
                .iter()
                .map(|&i| m.batch_loss(&common::batch_of(&sents, &[i]), None).unwrap())
                .sum();
            for b in [&batch, &wide] {
                worst = worst.max((m.batch_loss(b, None).unwrap() - total).abs() / size as f64);
            }
        }
    }
    ensure(worst <= 1e-10, || format!("max difference {worst:e}"))?;
    Ok(format!("{rows} sentence placements, max loss difference {worst:.1e}"))
}

fn trainability() -> Outcome {
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    for name in common::ARCHITECTURES {
        let cfg = config(name, &[]);
        let (train, dev, test, alphabets) = common::toy_alphabets(&cfg);
        let model = SeqLabeler::new(&cfg, &alphabets, Init::Full).unwrap();
        let data = TrainData {
            train: train.clone(),
            dev,
            test,
        };
        let mut reached = None;
        let mut stop = |r: &EpochRecord| {
            if r.monitor_accuracy == Some(100.0) {
                reached = Some(r.epoch + 1);
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        };
        let start = Instant::now();
        let run = train_model(
            model,
            &data,
            TrainOptions {
                monitor: Some(&train),
                on_epoch: Some(&mut stop),
                ..TrainOptions::default()
            },
        );
        let secs = start.elapsed().as_secs_f64();
        let last = run.as_ref().ok().and_then(|o| o.report.epochs.last().and_then(|e| e.monitor_accuracy));
        match (run, reached) {
            (Ok(_), Some(epochs)) if secs < 300.0 => lines.push(format!("{name} {epochs} epochs {secs:.0}s")),
            (Err(e), _) => failures.push(format!("{name}: {e}")),
            _ => failures.push(format!("{name}: accuracy {:.2} after {secs:.0}s", last.unwrap_or(f64::NAN))),
        }
    }
    ensure(failures.is_empty(), || failures.join("; "))?;
    Ok(lines.join(", "))
}

fn feature_plumbing() -> Outcome {
    let cap = common::fixtures().join("toy/cap.emb");
    let with = [
        "feature=[POS] emb_size=10".to_string(),
        format!("feature=[Cap] emb_dir={} emb_size=10", cap.display()),
        "epochs=3".into(),
    ];
    let mut widths = Vec::new();
    for feats in [&[][..], &with[..1], &with[..2]] {
        let mut o: Vec<String> = feats.to_vec();
        o.push("epochs=3".into());
        let cfg = config("ccnn_wlstm_crf", &o);
        let (train, dev, test, alphabets) = common::toy_alphabets(&cfg);
        let model = SeqLabeler::new(&cfg, &alphabets, Init::Full).map_err(|e| e.to_string())?;
        widths.push(model.representation.width());
        let out = train_model(model, &TrainData { train, dev, test }, TrainOptions::default()).map_err(|e| e.to_string())?;
        ensure(out.report.epochs.len() == 3, || "training stopped early".into())?;
    }
    ensure(widths[1] == widths[0] + 10 && widths[2] == widths[1] + 10, || format!("widths {widths:?}"))?;
    Ok(format!("widths {} -> {} -> {}, all trained", widths[0], widths[1], widths[2]))
}

fn oracle_monotonicity() -> Outcome {
    let cfg = config("ccnn_wlstm_crf", &["epochs=12".into()]);
    let (train, dev, test, alphabets) = common::toy_alphabets(&cfg);
    let model = SeqLabeler::new(&cfg, &alphabets, Init::Full).unwrap();
    let out = train_model(model, &TrainData { train, dev: dev.clone(), test }, TrainOptions::default()).unwrap();
    let model = out.model;
    let encoded: Vec<_> = dev.iter().map(|s| encode_sentence(s, &model.alphabets)).collect();
    let decoded = decode_corpus(&model, &encoded, 10, 10, 1).unwrap();
    let lists: Vec<Vec<Vec<String>>> = decoded
        .iter()
        .map(|d| {
            d.nbest
                .iter()
                .map(|p| p.labels.iter().map(|&y| model.label_name(y).to_string()).collect())
                .collect()
        })
        .collect();
    let mut r = common::rng(31);
    let mut flipped = 0;
    let gold: Vec<Vec<&str>> = dev
        .iter()
        .map(|s| {
            s.labels()
                .into_iter()
                .map(|l| {
                    if r.gen_bool(0.2) {
                        flipped += 1;
                        TOY_LABELS[r.gen_range(0..TOY_LABELS.len())]
                    } else {
                        l
                    }
                })
                .collect()
        })
        .collect();
    let mut curve = Vec::new();
    for n in 1..=10 {
        let o = oracle_at_n(&gold, &lists, n, TagScheme::Bio).unwrap();
        curve.push((o.prf.f1, o.accuracy));
    }
    let monotone = curve.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
    ensure(monotone, || format!("curve {curve:?}"))?;
    ensure(curve[9].0 >= curve[0].0, || "n=10 below n=1".into())?;
    Ok(format!(
        "{flipped} noisy labels, oracle F1 {:.2} at n=1 -> {:.2} at n=10, non-decreasing",
        curve[0].0, curve[9].0
    ))
}

fn bioes(sentences: &[Sentence]) -> Vec<Sentence> {
    sentences
        .iter()
        .map(|s| {
            let segs = extract_segments(&s.labels(), TagScheme::Bio).unwrap();
            let labels = segments_to_labels(&segs, s.len(), TagScheme::Bioes);
            let mut s = s.clone();
            for (t, l) in s.tokens.iter_mut().zip(labels) {
                t.label = l;
            }
            s
        })
        .collect()
}

fn full_scale_smoke() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let corpus = generate_toy(2016, 50);
    let mut vocab = BTreeMap::new();
    for (name, sents) in [("train", &corpus.train), ("dev", &corpus.dev), ("test", &corpus.test)] {
        let sents = bioes(sents);
        for t in sents.iter().flat_map(|s| &s.tokens) {
            vocab.insert(t.surface.to_lowercase(), ());
        }
        std::fs::write(dir.join(format!("{name}.bmes")), format_conll(&sents)).unwrap();
    }
    let mut r = common::rng(100);
    let mut emb = String::new();
    for w in vocab.keys() {
        let _ = write!(emb, "{w}");
        for _ in 0..100 {
            let _ = write!(emb, " {:.5}", r.gen_range(-0.5..0.5));
        }
        emb.push('\n');
    }
    std::fs::write(dir.join("emb.100d.txt"), emb).unwrap();
    let p = |f: &str| dir.join(f).display().to_string();
    let overrides = vec![
        format!("train_dir={}", p("train.bmes")),
        format!("dev_dir={}", p("dev.bmes")),
        format!("test_dir={}", p("test.bmes")),
        format!("word_emb_dir={}", p("emb.100d.txt")),
        format!("model_dir={}", p("model")),
        format!("raw_dir={}", p("test.bmes")),
        format!("decode_dir={}", p("test.out")),
        "epochs=2".into(),
    ];
    let cfg = config("conll03_full", &overrides);
    ensure(cfg.hyper.word_emb_dim == 100, || "word_emb_dim is not 100".into())?;
    let mut sink = Vec::new();
    let summary = run_train(&cfg, RunOptions::default(), &mut sink).map_err(|e| e.to_string())?;
    let decoded = run_decode(&cfg, RunOptions::default(), &mut sink).map_err(|e| e.to_string())?;
    ensure(decoded.sentences == corpus.test.len(), || "decode count".into())?;
    Ok(format!(
        "{} on 50 sentences, {} epochs, decoded {}",
        summary.architecture,
        summary.report.epochs.len(),
        decoded.sentences
    ))
}

fn run_once(dir: &Path) -> Vec<Vec<u8>> {
    let p = |f: &str| dir.join(f).display().to_string();
    let overrides = vec![
        format!("model_dir={}", p("model")),
        format!("raw_dir={}", common::toy_dir().join("test.bio").display()),
        format!("decode_dir={}", p("test.out")),
        "epochs=4".into(),
        "nbest=3".into(),
    ];
    let cfg = config("ccnn_wlstm_crf", &overrides);
    let mut sink = Vec::new();
    run_train(&cfg, RunOptions::default(), &mut sink).unwrap();
    run_decode(&cfg, RunOptions::default(), &mut sink).unwrap();
    let run_dir = dir.display().to_string();
    ["test.out", "model/loss.log", "model/model.json"]
        .iter()
        .map(|f| {
            let text = std::fs::read_to_string(dir.join(f)).unwrap();
            text.replace(&run_dir, "RUN").into_bytes()
        })
        .collect()
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (x, y) = (run_once(a.path()), run_once(b.path()));
    for (name, (l, r)) in ["decode file", "loss log", "checkpoint"].iter().zip(x.iter().zip(&y)) {
        ensure(l == r, || format!("{name} differs"))?;
    }
    Ok(format!("decode file ({} bytes), loss log and checkpoint identical", x[0].len()))
}

fn config_fidelity() -> Outcome {
    let c = parse_config(common::config_path("features")).map_err(|e| e.to_string())?;
    let feats: Vec<(&str, usize, bool)> = c
        .features
        .iter()
        .map(|f| (f.name.as_str(), f.emb_size, f.emb_dir.is_some()))
        .collect();
    ensure(
        c.use_crf
            && c.word_seq_feature == SeqKind::Lstm
            && c.word_seq_layer == 1
            && c.char_seq_feature == CharKind::Cnn
            && feats == [("POS", 10, false), ("Cap", 10, true)],
        || format!("feature config parsed as {}", c.serialize()),
    )?;
    let expected = [
        "Nochar+WCNN+CRF",
        "Nochar+WLSTM+CRF",
        "CLSTM+WCNN+CRF",
        "CLSTM+WLSTM+CRF",
        "CCNN+WCNN+CRF",
        "CCNN+WLSTM+CRF",
    ];
    for (name, want) in common::ARCHITECTURES.iter().zip(expected) {
        let c = parse_config(common::config_path(name)).map_err(|e| e.to_string())?;
        let again = parse_config_str(&c.serialize(), Path::new("/")).map_err(|e| e.to_string())?;
        ensure(c.describe() == want && again.describe() == want && again == c, || {
            format!("{name} describes as {}", c.describe())
        })?;
    }
    Ok("feature config and six architecture strings round-trip".into())
}

fn bench_harness() -> Outcome {
    let cfg = config("ccnn_wlstm_crf", &[]);
    let mut out = Vec::new();
    let rows = run_bench(&cfg, &[1, 10, 100], BenchSettings { budget: 100, repeats: 2 }, &mut out).map_err(|e| e.to_string())?;
    let text = String::from_utf8(out).unwrap();
    let table: Vec<&str> = text.lines().filter(|l| l.starts_with(|c: char| c.is_ascii_digit()) || l.starts_with("batch_size")).collect();
    ensure(table.len() == 4 && table[0].split('\t').count() == 5, || format!("table:\n{text}"))?;
    for (line, bs) in table[1..].iter().zip([1, 10, 100]) {
        let cols: Vec<f64> = line.split('\t').map(|c| c.parse().unwrap()).collect();
        ensure(cols.len() == 5 && cols[0] == bs as f64 && cols[1] > 0.0 && cols[3] > 0.0, || format!("row {line}"))?;
    }
    let summary: Vec<String> = rows.iter().map(|r| format!("{}:{:.0}/{:.0}", r.batch_size, r.train_mean, r.decode_mean)).collect();
    Ok(format!("3 rows, train/decode sent/s {}", summary.join(" ")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("partition exactness", partition_exactness),
        ("viterbi exactness", viterbi_exactness),
        ("n-best exactness", nbest_exactness),
        ("gradient integrity", gradient_integrity),
        ("batch and padding invariance", padding_invariance),
        ("trainability", trainability),
        ("feature plumbing", feature_plumbing),
        ("oracle monotonicity", oracle_monotonicity),
        ("full-scale config smoke", full_scale_smoke),
        ("determinism", determinism),
        ("config fidelity", config_fidelity),
        ("benchmark harness", bench_harness),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (title, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("criterion {n:>2} PASS {title}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL {title}: {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
