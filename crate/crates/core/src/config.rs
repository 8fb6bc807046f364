//! Plain-text model configuration.
//!
//! One `key=value` per line. Lines starting with `#` are comments and a line
//! made only of dots is an elision marker. `feature=[Name] emb_dir=PATH
//! emb_size=N` lines may repeat, one per handcrafted feature. An optional
//! leading `[vars]` section defines names usable as `%(name)` in later values;
//! it ends at the first line starting with `[` or `##`.
//!
//! Relative paths are resolved against the directory of the config file.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

macro_rules! choice_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const CHOICES: &'static [&'static str] = &[$($text),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                $(if s.eq_ignore_ascii_case($text) { return Ok($name::$variant); })+
                Err(format!("invalid value {s:?}, expected one of {{{}}}", Self::CHOICES.join(",")))
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

choice_enum!(SeqKind { Lstm => "LSTM", Gru => "GRU", Cnn => "CNN" });
choice_enum!(CharKind { Lstm => "LSTM", Gru => "GRU", Cnn => "CNN", None => "None" });
choice_enum!(OptimizerKind {
    Sgd => "SGD",
    AdaGrad => "AdaGrad",
    AdaDelta => "AdaDelta",
    RmsProp => "RMSProp",
    Adam => "Adam",
});
choice_enum!(TagScheme { Bio => "BIO", Bioes => "BIOES" });
choice_enum!(LossFunction { Nll => "NLL", Ce => "CE" });
choice_enum!(BatchAverage { Batch => "batch", Token => "token" });

impl CharKind {
    pub fn seq_kind(self) -> Option<SeqKind> {
        match self {
            CharKind::Lstm => Some(SeqKind::Lstm),
            CharKind::Gru => Some(SeqKind::Gru),
            CharKind::Cnn => Some(SeqKind::Cnn),
            CharKind::None => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpec {
    pub name: String,
    pub emb_dir: Option<PathBuf>,
    pub emb_size: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IoPaths {
    pub train_dir: Option<PathBuf>,
    pub dev_dir: Option<PathBuf>,
    pub test_dir: Option<PathBuf>,
    pub raw_dir: Option<PathBuf>,
    pub decode_dir: Option<PathBuf>,
    pub word_emb_dir: Option<PathBuf>,
    pub char_emb_dir: Option<PathBuf>,
    /// Checkpoint location written by training and read by decoding.
    pub model_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Training {
    pub optimizer: OptimizerKind,
    /// Recorded for completeness; both names select token cross-entropy for softmax output.
    pub loss_function: LossFunction,
    pub train_shuffle: bool,
    pub ave_batch_loss: bool,
    pub ave_batch_loss_by: BatchAverage,
    pub open_label_set: bool,
    pub clip: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyper {
    pub lr: f64,
    pub lr_decay: f64,
    pub hidden_dim: usize,
    pub char_hidden_dim: usize,
    pub word_emb_dim: usize,
    pub char_emb_dim: usize,
    pub dropout: f64,
    pub batch_size: usize,
    pub nbest: usize,
    pub epochs: usize,
    pub seed: u64,
    pub momentum: f64,
    pub l2: f64,
    pub tag_scheme: TagScheme,
    pub char_window: usize,
    pub word_window: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub use_crf: bool,
    pub word_seq_feature: SeqKind,
    pub word_seq_layer: usize,
    pub char_seq_feature: CharKind,
    pub use_batchnorm: bool,
    pub features: Vec<FeatureSpec>,
    pub io: IoPaths,
    pub training: Training,
    pub hyper: Hyper,
}

pub const DEFAULT_LR: f64 = 0.015;
pub const DEFAULT_CNN_LR: f64 = 0.005;
pub const DEFAULT_FEATURE_EMB_SIZE: usize = 10;
pub const DEFAULT_MOMENTUM: f64 = 0.9;

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            use_crf: true,
            word_seq_feature: SeqKind::Lstm,
            word_seq_layer: 1,
            char_seq_feature: CharKind::Cnn,
            use_batchnorm: false,
            features: Vec::new(),
            io: IoPaths::default(),
            training: Training {
                optimizer: OptimizerKind::Sgd,
                loss_function: LossFunction::Nll,
                train_shuffle: true,
                ave_batch_loss: false,
                ave_batch_loss_by: BatchAverage::Batch,
                open_label_set: true,
                clip: 5.0,
            },
            hyper: Hyper {
                lr: DEFAULT_LR,
                lr_decay: 0.05,
                hidden_dim: 200,
                char_hidden_dim: 50,
                word_emb_dim: 50,
                char_emb_dim: 30,
                dropout: 0.5,
                batch_size: 10,
                nbest: 1,
                epochs: 100,
                seed: 42,
                momentum: DEFAULT_MOMENTUM,
                l2: 1e-8,
                tag_scheme: TagScheme::Bio,
                char_window: 3,
                word_window: 3,
            },
        }
    }
}

impl ModelConfig {
    /// Architecture label such as `CCNN+WLSTM+CRF`.
    pub fn describe(&self) -> String {
        let ch = match self.char_seq_feature {
            CharKind::None => "Nochar".to_string(),
            k => format!("C{}", k.as_str()),
        };
        let inference = if self.use_crf { "CRF" } else { "Softmax" };
        format!("{ch}+W{}+{inference}", self.word_seq_feature)
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    /// Canonical config text; parsing it yields an equal config.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let path = |p: &Option<PathBuf>| {
            p.as_ref()
                .map_or_else(|| "None".to_string(), |p| p.display().to_string())
        };
        let b = |v: bool| if v { "True" } else { "False" };
        let io = &self.io;
        let _ = writeln!(s, "### I/O ###");
        for (k, v) in [
            ("train_dir", &io.train_dir),
            ("dev_dir", &io.dev_dir),
            ("test_dir", &io.test_dir),
            ("raw_dir", &io.raw_dir),
            ("decode_dir", &io.decode_dir),
            ("word_emb_dir", &io.word_emb_dir),
            ("char_emb_dir", &io.char_emb_dir),
            ("model_dir", &io.model_dir),
        ] {
            let _ = writeln!(s, "{k}={}", path(v));
        }
        let _ = writeln!(s, "##NetworkConfiguration##");
        let _ = writeln!(s, "use_crf={}", b(self.use_crf));
        let _ = writeln!(s, "word_seq_feature={}", self.word_seq_feature);
        let _ = writeln!(s, "word_seq_layer={}", self.word_seq_layer);
        let _ = writeln!(s, "char_seq_feature={}", self.char_seq_feature);
        let _ = writeln!(s, "use_batchnorm={}", b(self.use_batchnorm));
        for f in &self.features {
            let _ = writeln!(
                s,
                "feature=[{}] emb_dir={} emb_size={}",
                f.name,
                path(&f.emb_dir),
                f.emb_size
            );
        }
        let t = &self.training;
        let _ = writeln!(s, "##TrainingSetting##");
        let _ = writeln!(s, "optimizer={}", t.optimizer);
        let _ = writeln!(s, "loss_function={}", t.loss_function);
        let _ = writeln!(s, "train_shuffle={}", b(t.train_shuffle));
        let _ = writeln!(s, "ave_batch_loss={}", b(t.ave_batch_loss));
        let _ = writeln!(s, "ave_batch_loss_by={}", t.ave_batch_loss_by);
        let _ = writeln!(s, "open_label_set={}", b(t.open_label_set));
        let _ = writeln!(s, "clip={}", t.clip);
        let h = &self.hyper;
        let _ = writeln!(s, "##Hyperparameters##");
        let _ = writeln!(s, "lr={}", h.lr);
        let _ = writeln!(s, "lr_decay={}", h.lr_decay);
        let _ = writeln!(s, "hidden_dim={}", h.hidden_dim);
        let _ = writeln!(s, "char_hidden_dim={}", h.char_hidden_dim);
        let _ = writeln!(s, "word_emb_dim={}", h.word_emb_dim);
        let _ = writeln!(s, "char_emb_dim={}", h.char_emb_dim);
        let _ = writeln!(s, "dropout={}", h.dropout);
        let _ = writeln!(s, "batch_size={}", h.batch_size);
        let _ = writeln!(s, "nbest={}", h.nbest);
        let _ = writeln!(s, "epochs={}", h.epochs);
        let _ = writeln!(s, "seed={}", h.seed);
        let _ = writeln!(s, "momentum={}", h.momentum);
        let _ = writeln!(s, "l2={}", h.l2);
        let _ = writeln!(s, "tag_scheme={}", h.tag_scheme);
        let _ = writeln!(s, "char_cnn_window={}", h.char_window);
        let _ = writeln!(s, "word_cnn_window={}", h.word_window);
        s
    }

    /// Checks value ranges and cross-field constraints.
    pub fn validate(&self) -> Result<()> {
        let h = &self.hyper;
        let positive = [
            ("word_seq_layer", self.word_seq_layer),
            ("hidden_dim", h.hidden_dim),
            ("char_hidden_dim", h.char_hidden_dim),
            ("word_emb_dim", h.word_emb_dim),
            ("char_emb_dim", h.char_emb_dim),
            ("batch_size", h.batch_size),
            ("nbest", h.nbest),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("{k} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&h.dropout) {
            return Err(Error::config(format!(
                "dropout must be in [0, 1), got {}",
                h.dropout
            )));
        }
        if self.word_seq_feature != SeqKind::Cnn && h.hidden_dim % 2 != 0 {
            return Err(Error::config(format!(
                "hidden_dim must be even for a bidirectional {} encoder",
                self.word_seq_feature
            )));
        }
        if matches!(self.char_seq_feature, CharKind::Lstm | CharKind::Gru)
            && h.char_hidden_dim % 2 != 0
        {
            return Err(Error::config(format!(
                "char_hidden_dim must be even for a bidirectional {} encoder",
                self.char_seq_feature
            )));
        }
        for (k, w) in [("char_cnn_window", h.char_window), ("word_cnn_window", h.word_window)] {
            if w % 2 == 0 {
                return Err(Error::config(format!("{k} must be odd, got {w}")));
            }
        }
        if self.use_batchnorm {
            return Err(Error::config("use_batchnorm=True is not supported"));
        }
        if h.lr < 0.0 || h.lr_decay < 0.0 || self.training.clip <= 0.0 {
            return Err(Error::config("lr and lr_decay must be non-negative, clip positive"));
        }
        let mut names: Vec<&str> = Vec::new();
        for f in &self.features {
            if names.contains(&f.name.as_str()) {
                return Err(Error::config(format!("duplicate feature [{}]", f.name)));
            }
            names.push(&f.name);
            if f.emb_size == 0 {
                return Err(Error::config(format!("feature [{}] emb_size must be positive", f.name)));
            }
        }
        Ok(())
    }

    /// Checks that referenced embedding files exist.
    pub fn check_files(&self) -> Result<()> {
        let embedding_files = self
            .features
            .iter()
            .filter_map(|f| f.emb_dir.as_ref().map(|p| (format!("feature [{}] emb_dir", f.name), p)))
            .chain(self.io.word_emb_dir.as_ref().map(|p| ("word_emb_dir".to_string(), p)))
            .chain(self.io.char_emb_dir.as_ref().map(|p| ("char_emb_dir".to_string(), p)));
        for (what, p) in embedding_files {
            if !p.is_file() {
                return Err(Error::config(format!("{what}: file not found: {}", p.display())));
            }
        }
        Ok(())
    }
}

/// Incremental parser shared by config files and command-line overrides.
#[derive(Debug, Clone)]
pub struct ConfigParser {
    base_dir: PathBuf,
    vars: Vec<(String, String)>,
    config: ModelConfig,
    lr_set: bool,
}

impl ConfigParser {
    pub fn new(base_dir: impl Into<PathBuf>) -> Self {
        ConfigParser {
            base_dir: base_dir.into(),
            vars: Vec::new(),
            config: ModelConfig::default(),
            lr_set: false,
        }
    }

    pub fn parse_text(&mut self, text: &str) -> Result<()> {
        let mut in_vars = false;
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if line == "[vars]" {
                in_vars = true;
                continue;
            }
            if in_vars && (line.starts_with('[') || line.starts_with("##")) {
                in_vars = false;
                if line.starts_with('[') {
                    continue;
                }
            }
            if line.starts_with('#') || line.chars().all(|c| c == '.') {
                continue;
            }
            if in_vars {
                let (k, v) = split_kv(line).ok_or_else(|| {
                    Error::config_at(lineno, format!("malformed variable definition: {line}"))
                })?;
                let v = self.substitute(v, lineno)?;
                self.vars.retain(|(n, _)| n != k);
                self.vars.push((k.to_string(), v));
                continue;
            }
            self.apply_line(line, Some(lineno))?;
        }
        Ok(())
    }

    /// Applies a single `key=value` assignment (also used for overrides).
    pub fn apply_line(&mut self, line: &str, lineno: Option<usize>) -> Result<()> {
        let err = |msg: String| Error::Config { line: lineno, msg };
        let line = line.trim();
        let (key, value) =
            split_kv(line).ok_or_else(|| err(format!("expected key=value, found {line:?}")))?;
        let value = self.substitute(value, lineno.unwrap_or(0))?;
        if key == "feature" {
            return self.apply_feature(line, lineno);
        }
        let c = &mut self.config;
        match key {
            "use_crf" => c.use_crf = parse_bool(key, &value).map_err(err)?,
            "word_seq_feature" => c.word_seq_feature = parse_choice(key, &value).map_err(err)?,
            "word_seq_layer" => c.word_seq_layer = parse_num(key, &value).map_err(err)?,
            "char_seq_feature" => c.char_seq_feature = parse_choice(key, &value).map_err(err)?,
            "use_char" => {
                if !parse_bool(key, &value).map_err(err)? {
                    c.char_seq_feature = CharKind::None;
                }
            }
            "use_batchnorm" => c.use_batchnorm = parse_bool(key, &value).map_err(err)?,
            "train_dir" | "dev_dir" | "test_dir" | "raw_dir" | "decode_dir" | "word_emb_dir"
            | "char_emb_dir" | "model_dir" => {
                let p = resolve_path(&self.base_dir, &value);
                let io = &mut c.io;
                *match key {
                    "train_dir" => &mut io.train_dir,
                    "dev_dir" => &mut io.dev_dir,
                    "test_dir" => &mut io.test_dir,
                    "raw_dir" => &mut io.raw_dir,
                    "decode_dir" => &mut io.decode_dir,
                    "word_emb_dir" => &mut io.word_emb_dir,
                    "char_emb_dir" => &mut io.char_emb_dir,
                    _ => &mut io.model_dir,
                } = p;
            }
            "optimizer" => c.training.optimizer = parse_choice(key, &value).map_err(err)?,
            "loss_function" => c.training.loss_function = parse_choice(key, &value).map_err(err)?,
            "train_shuffle" => c.training.train_shuffle = parse_bool(key, &value).map_err(err)?,
            "ave_batch_loss" => c.training.ave_batch_loss = parse_bool(key, &value).map_err(err)?,
            "ave_batch_loss_by" => c.training.ave_batch_loss_by = parse_choice(key, &value).map_err(err)?,
            "open_label_set" => c.training.open_label_set = parse_bool(key, &value).map_err(err)?,
            "clip" => c.training.clip = parse_num(key, &value).map_err(err)?,
            "lr" => {
                c.hyper.lr = parse_num(key, &value).map_err(err)?;
                self.lr_set = true;
            }
            "lr_decay" => c.hyper.lr_decay = parse_num(key, &value).map_err(err)?,
            "hidden_dim" => c.hyper.hidden_dim = parse_num(key, &value).map_err(err)?,
            "char_hidden_dim" => c.hyper.char_hidden_dim = parse_num(key, &value).map_err(err)?,
            "word_emb_dim" => c.hyper.word_emb_dim = parse_num(key, &value).map_err(err)?,
            "char_emb_dim" => c.hyper.char_emb_dim = parse_num(key, &value).map_err(err)?,
            "dropout" => c.hyper.dropout = parse_num(key, &value).map_err(err)?,
            "batch_size" => c.hyper.batch_size = parse_num(key, &value).map_err(err)?,
            "nbest" => c.hyper.nbest = parse_num(key, &value).map_err(err)?,
            "epochs" | "iteration" => c.hyper.epochs = parse_num(key, &value).map_err(err)?,
            "seed" => c.hyper.seed = parse_num(key, &value).map_err(err)?,
            "momentum" => c.hyper.momentum = parse_num(key, &value).map_err(err)?,
            "l2" => c.hyper.l2 = parse_num(key, &value).map_err(err)?,
            "tag_scheme" => c.hyper.tag_scheme = parse_choice(key, &value).map_err(err)?,
            "char_cnn_window" => c.hyper.char_window = parse_num(key, &value).map_err(err)?,
            "word_cnn_window" => c.hyper.word_window = parse_num(key, &value).map_err(err)?,
            _ => return Err(err(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    fn apply_feature(&mut self, line: &str, lineno: Option<usize>) -> Result<()> {
        let err = |msg: String| Error::Config { line: lineno, msg };
        let mut parts = line.split_whitespace();
        let head = parts.next().unwrap_or_default();
        let name = head
            .strip_prefix("feature=")
            .and_then(|v| v.strip_prefix('['))
            .and_then(|v| v.strip_suffix(']'))
            .filter(|n| !n.is_empty() && !n.contains(['[', ']']))
            .ok_or_else(|| err(format!("malformed feature line: {line}")))?;
        let mut spec = FeatureSpec {
            name: name.to_string(),
            emb_dir: None,
            emb_size: DEFAULT_FEATURE_EMB_SIZE,
        };
        for part in parts {
            let (k, v) =
                split_kv(part).ok_or_else(|| err(format!("malformed feature line: {line}")))?;
            let v = self.substitute(v, lineno.unwrap_or(0))?;
            match k {
                "emb_dir" => spec.emb_dir = resolve_path(&self.base_dir, &v),
                "emb_size" => {
                    spec.emb_size = v
                        .parse()
                        .map_err(|_| err(format!("malformed feature line: emb_size={v}")))?
                }
                _ => return Err(err(format!("malformed feature line: unknown attribute {k:?}"))),
            }
        }
        if self.config.features.iter().any(|f| f.name == spec.name) {
            return Err(err(format!("duplicate feature [{}]", spec.name)));
        }
        self.config.features.push(spec);
        Ok(())
    }

    fn substitute(&self, value: &str, lineno: usize) -> Result<String> {
        let mut out = String::new();
        let mut rest = value;
        while let Some(start) = rest.find("%(") {
            out.push_str(&rest[..start]);
            let after = &rest[start + 2..];
            let end = after
                .find(')')
                .ok_or_else(|| Error::config_at(lineno, format!("unterminated %( in {value:?}")))?;
            let name = &after[..end];
            let v = self
                .vars
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, v)| v)
                .ok_or_else(|| Error::config_at(lineno, format!("undefined variable %({name})")))?;
            out.push_str(v);
            rest = &after[end + 1..];
        }
        out.push_str(rest);
        Ok(out)
    }

    /// Resolves defaults that depend on other keys and validates.
    pub fn finish(mut self) -> Result<ModelConfig> {
        if !self.lr_set && self.config.word_seq_feature == SeqKind::Cnn {
            self.config.hyper.lr = DEFAULT_CNN_LR;
        }
        self.config.validate()?;
        self.config.check_files()?;
        Ok(self.config)
    }

    /// Like [`ConfigParser::finish`] but without touching the filesystem.
    pub fn finish_offline(mut self) -> Result<ModelConfig> {
        if !self.lr_set && self.config.word_seq_feature == SeqKind::Cnn {
            self.config.hyper.lr = DEFAULT_CNN_LR;
        }
        self.config.validate()?;
        Ok(self.config)
    }
}

fn split_kv(line: &str) -> Option<(&str, &str)> {
    let (k, v) = line.split_once('=')?;
    let k = k.trim();
    if k.is_empty() {
        return None;
    }
    Some((k, v.trim()))
}

fn parse_bool(key: &str, v: &str) -> std::result::Result<bool, String> {
    if v.eq_ignore_ascii_case("true") {
        Ok(true)
    } else if v.eq_ignore_ascii_case("false") {
        Ok(false)
    } else {
        Err(format!("{key}: expected True or False, found {v:?}"))
    }
}

fn parse_choice<T: FromStr<Err = String>>(key: &str, v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|m| format!("{key}: {m}"))
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
    v.parse()
        .map_err(|_| format!("{key}: cannot parse {v:?} as a number"))
}

fn resolve_path(base: &Path, value: &str) -> Option<PathBuf> {
    if value.eq_ignore_ascii_case("none") || value.is_empty() {
        return None;
    }
    let p = PathBuf::from(value);
    Some(if p.is_absolute() { p } else { base.join(p) })
}

pub fn parse_config_str(text: &str, base_dir: &Path) -> Result<ModelConfig> {
    let mut p = ConfigParser::new(base_dir);
    p.parse_text(text)?;
    p.finish()
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<ModelConfig> {
    parse_config_with_overrides(path, &[])
}

/// Parses a config file, then applies `key=value` overrides in order.
///
/// Relative paths in the file resolve against its directory; those in
/// overrides resolve against the working directory.
pub fn parse_config_with_overrides(path: impl AsRef<Path>, overrides: &[String]) -> Result<ModelConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut p = ConfigParser::new(base);
    p.parse_text(&text)?;
    p.base_dir = PathBuf::new();
    for o in overrides {
        p.apply_line(o, None)
            .map_err(|e| Error::config(format!("override {o:?}: {e}")))?;
    }
    p.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ModelConfig> {
        parse_config_str(text, Path::new("/tmp"))
    }

    #[test]
    fn defaults() {
        let c = parse("use_crf=False").unwrap();
        assert!(!c.use_crf);
        let d = ModelConfig::default();
        assert_eq!(c.hyper, d.hyper);
        assert_eq!(c.hyper.word_emb_dim, 50);
        assert_eq!(c.hyper.char_emb_dim, 30);
        assert_eq!(c.hyper.hidden_dim, 200);
        assert_eq!(c.hyper.char_hidden_dim, 50);
        assert_eq!(c.hyper.dropout, 0.5);
        assert_eq!(c.hyper.lr, 0.015);
        assert_eq!(c.hyper.lr_decay, 0.05);
        assert_eq!(c.hyper.batch_size, 10);
        assert_eq!(c.hyper.epochs, 100);
        assert_eq!(c.hyper.nbest, 1);
        assert_eq!(c.training.optimizer, OptimizerKind::Sgd);
        assert_eq!(c.hyper.tag_scheme, TagScheme::Bio);
    }

    #[test]
    fn invalid_enum_lists_choices() {
        let e = parse("word_seq_feature=TRANSFORMER").unwrap_err().to_string();
        assert!(e.contains("{LSTM,GRU,CNN}"), "{e}");
        assert!(e.contains("line 1"));
    }

    #[test]
    fn unknown_key_is_named() {
        let e = parse("use_crf=True\nfoo=1").unwrap_err().to_string();
        assert!(e.contains("\"foo\"") && e.contains("line 2"), "{e}");
    }

    #[test]
    fn malformed_feature_line() {
        let e = parse("\nfeature=POS emb_size=3").unwrap_err();
        assert!(matches!(e, Error::Config { line: Some(2), .. }));
        let e = parse("feature=[POS] emb_size=x").unwrap_err();
        assert!(matches!(e, Error::Config { line: Some(1), .. }));
    }

    #[test]
    fn booleans_case_insensitive_and_none_paths() {
        let c = parse("use_crf=FALSE\ntrain_shuffle=true\ntrain_dir=None").unwrap();
        assert!(!c.use_crf && c.training.train_shuffle);
        assert!(c.io.train_dir.is_none());
        assert!(parse("use_crf=yes").is_err());
    }

    #[test]
    fn cnn_word_encoder_gets_smaller_default_lr() {
        assert_eq!(parse("word_seq_feature=CNN").unwrap().hyper.lr, 0.005);
        assert_eq!(parse("word_seq_feature=CNN\nlr=0.1").unwrap().hyper.lr, 0.1);
    }

    #[test]
    fn variables_substitute_and_undefined_fail() {
        let c = parse("[vars]\nroot=/data\n[config]\ntrain_dir=%(root)/train.txt").unwrap();
        assert_eq!(c.io.train_dir, Some(PathBuf::from("/data/train.txt")));
        assert!(parse("train_dir=%(nope)/x").is_err());
    }

    #[test]
    fn describe_names() {
        let mut c = ModelConfig::default();
        assert_eq!(c.describe(), "CCNN+WLSTM+CRF");
        c.char_seq_feature = CharKind::None;
        c.word_seq_feature = SeqKind::Cnn;
        assert_eq!(c.describe(), "Nochar+WCNN+CRF");
        c.char_seq_feature = CharKind::Lstm;
        c.word_seq_feature = SeqKind::Lstm;
        c.use_crf = false;
        assert_eq!(c.describe(), "CLSTM+WLSTM+Softmax");
    }

    #[test]
    fn validation_rules() {
        assert!(parse("dropout=1.0").is_err());
        assert!(parse("nbest=0").is_err());
        assert!(parse("hidden_dim=7").is_err());
        assert!(parse("word_seq_feature=CNN\nhidden_dim=7").is_ok());
        assert!(parse("use_batchnorm=True").is_err());
        assert!(parse("feature=[POS]\nfeature=[POS]").is_err());
        assert!(parse("feature=[Cap] emb_dir=/definitely/missing.txt").is_err());
    }

    #[test]
    fn serialize_round_trip() {
        let c = parse("feature=[POS] emb_size=7\nword_seq_feature=GRU\nlr=0.0123\nseed=9").unwrap();
        let again = parse(&c.serialize()).unwrap();
        assert_eq!(c, again);
        assert_eq!(again.serialize(), c.serialize());
    }
}
