use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn toy(split: &str) -> String {
    fixtures().join("toy").join(format!("{split}.bio")).display().to_string()
}

fn seqtag(args: &[&str], sets: &[String]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_seqtag"));
    cmd.args(args);
    for s in sets {
        cmd.arg("--set").arg(s);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small(model_dir: &Path) -> Vec<String> {
    vec![
        format!("train_dir={}", toy("train")),
        format!("dev_dir={}", toy("dev")),
        format!("test_dir={}", toy("test")),
        format!("model_dir={}", model_dir.display()),
        "epochs=2".into(),
        "word_emb_dim=6".into(),
        "char_emb_dim=4".into(),
        "char_hidden_dim=4".into(),
        "hidden_dim=8".into(),
    ]
}

fn features_config() -> String {
    fixtures().join("configs/features.config").display().to_string()
}

#[test]
fn train_then_decode_with_nbest() {
    let tmp = tempfile::tempdir().unwrap();
    let model = tmp.path().join("model");
    let sets = small(&model);
    let o = seqtag(&["train", "--config", &features_config()], &sets);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("CCNN+WLSTM+CRF\n"), "{text}");
    assert!(text.contains("epoch 1\t"));
    assert!(model.join("model.json").is_file());
    assert!(model.join("loss.log").is_file());

    let out = tmp.path().join("raw.out");
    let mut dec = sets.clone();
    dec.push(format!("raw_dir={}", toy("test")));
    dec.push(format!("decode_dir={}", out.display()));
    dec.push("nbest=10".into());
    let o = seqtag(&["decode", "--config", &features_config(), "--workers", "2"], &dec);
    assert!(o.status.success(), "{}", stderr(&o));
    let written = std::fs::read_to_string(&out).unwrap();
    let mut blocks = written.split("\n\n").filter(|b| !b.trim().is_empty());
    let first = blocks.next().unwrap();
    let mut lines = first.lines();
    let header = lines.next().unwrap();
    assert_eq!(header.split_whitespace().count(), 2 + 10, "{header}");
    for line in lines {
        assert_eq!(line.split_whitespace().count(), 3 + 10, "{line}");
    }
}

#[test]
fn decoding_labelled_text_reports_accuracy() {
    let tmp = tempfile::tempdir().unwrap();
    let mut sets = small(&tmp.path().join("m"));
    sets.push("use_crf=False".into());
    let o = seqtag(&["train", "--config", &features_config()], &sets);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("CCNN+WLSTM+Softmax\n"));
    sets.push(format!("raw_dir={}", toy("train")));
    sets.push(format!("decode_dir={}", tmp.path().join("train.out").display()));
    let o = seqtag(&["decode", "--config", &features_config()], &sets);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("\naccuracy\t"), "{text}");
    assert!(text.contains("\nf1\t"));
}

#[test]
fn invalid_config_fails_before_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let model = tmp.path().join("never");
    let mut sets = small(&model);
    sets.push("word_seq_feature=TRANSFORMER".into());
    let o = seqtag(&["train", "--config", &features_config()], &sets);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.starts_with("config-error:"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
    assert!(!model.exists());
}

#[test]
fn missing_checkpoint_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let model = tmp.path().join("empty");
    let mut sets = small(&model);
    sets.push(format!("raw_dir={}", toy("test")));
    sets.push(format!("decode_dir={}", tmp.path().join("x.out").display()));
    let o = seqtag(&["decode", "--config", &features_config()], &sets);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.starts_with("checkpoint-error:"), "{err}");
    assert!(err.contains(&model.join("model.json").display().to_string()));
}

#[test]
fn bench_prints_one_row_per_batch_size() {
    let tmp = tempfile::tempdir().unwrap();
    let sets = small(&tmp.path().join("m"));
    let o = seqtag(
        &["bench", "--config", &features_config(), "--batch-sizes", "1,10,100", "--budget", "20", "--repeats", "2"],
        &sets,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().filter(|l| l.chars().next().is_some_and(|c| c.is_ascii_digit())).collect();
    assert_eq!(rows.len(), 3, "{text}");
    for (row, bs) in rows.iter().zip(["1", "10", "100"]) {
        let cols: Vec<&str> = row.split('\t').collect();
        assert_eq!(cols.len(), 5);
        assert_eq!(cols[0], bs);
        assert!(cols[1..].iter().all(|c| c.parse::<f64>().unwrap() >= 0.0));
    }
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = seqtag(&["train", "--config", "x.config", "--frobnicate"], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("usage-error:"));
    let o = seqtag(&["--help"], &[]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("decode"));
}
