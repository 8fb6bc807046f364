use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::config::{ConfigParser, ModelConfig};
use crate::corpus::Alphabets;
use crate::error::{Error, Result};
use crate::model::{Init, SeqLabeler};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    architecture: String,
    config: String,
    alphabets: Alphabets,
    params: Vec<ParamEntry>,
}

/// JSON text of a model: version, config echo, alphabets, and named parameters.
pub fn checkpoint_to_string(model: &SeqLabeler) -> Result<String> {
    let file = CheckpointFile {
        format_version: CHECKPOINT_VERSION,
        architecture: model.config.describe(),
        config: model.config.serialize(),
        alphabets: model.alphabets.clone(),
        params: model
            .store
            .iter()
            .map(|(_, p)| ParamEntry {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                data: p.value.data().to_vec(),
            })
            .collect(),
    };
    serde_json::to_string(&file).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn checkpoint_from_str(text: &str) -> Result<SeqLabeler> {
    let file: CheckpointFile =
        serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("unreadable checkpoint: {e}")))?;
    if file.format_version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "checkpoint format version {} is not supported (expected {CHECKPOINT_VERSION})",
            file.format_version
        )));
    }
    let mut parser = ConfigParser::new(".");
    let config = parser
        .parse_text(&file.config)
        .and_then(|_| parser.finish_offline())
        .map_err(|e| Error::Checkpoint(format!("embedded config: {e}")))?;
    let mut model = SeqLabeler::new(&config, &file.alphabets, Init::RandomOnly)?;
    if model.store.len() != file.params.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {} parameters but the {} model needs {}",
            file.params.len(),
            file.architecture,
            model.store.len()
        )));
    }
    for p in file.params {
        let value = Tensor::new(&p.shape, p.data).map_err(|e| Error::Checkpoint(format!("{}: {e}", p.name)))?;
        model
            .store
            .assign(&p.name, value)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", p.name)))?;
    }
    Ok(model)
}

pub fn save_checkpoint(model: &SeqLabeler, path: &Path) -> Result<()> {
    let text = checkpoint_to_string(model)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<SeqLabeler> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_str(&text).map_err(|e| match e {
        Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Checks that a run-time config describes the same network as a checkpoint.
pub fn check_compatible(model: &SeqLabeler, config: &ModelConfig) -> Result<()> {
    let saved = &model.config;
    let same = saved.describe() == config.describe()
        && saved.word_seq_layer == config.word_seq_layer
        && saved.feature_names() == config.feature_names()
        && saved.hyper.hidden_dim == config.hyper.hidden_dim
        && saved.hyper.char_hidden_dim == config.hyper.char_hidden_dim
        && saved.hyper.word_emb_dim == config.hyper.word_emb_dim
        && saved.hyper.char_emb_dim == config.hyper.char_emb_dim;
    if same {
        Ok(())
    } else {
        Err(Error::Checkpoint(format!(
            "format version {CHECKPOINT_VERSION}: checkpoint holds a {} model that does not match the configured {}",
            saved.describe(),
            config.describe()
        )))
    }
}
