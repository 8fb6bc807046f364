use std::path::PathBuf;

use thiserror::Error;

use crate::autodiff::TensorError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{}line {line}: {msg}", path_prefix(.path))]
    Format {
        path: Option<PathBuf>,
        line: usize,
        msg: String,
    },
    #[error("{0}")]
    Label(String),
    #[error("{}", config_message(.line, .msg))]
    Config { line: Option<usize>, msg: String },
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("incompatible checkpoint: {0}")]
    Checkpoint(String),
    #[error("non-finite loss in epoch {epoch}, batch {batch}: {value}")]
    NonFinite { epoch: usize, batch: usize, value: f64 },
    #[error("{0}")]
    Contract(String),
    #[error("{0}")]
    Domain(String),
}

fn path_prefix(path: &Option<PathBuf>) -> String {
    path.as_ref()
        .map(|p| format!("{}: ", p.display()))
        .unwrap_or_default()
}

fn config_message(line: &Option<usize>, msg: &str) -> String {
    match line {
        Some(l) => format!("line {l}: {msg}"),
        None => msg.to_string(),
    }
}

impl Error {
    /// Short machine-readable category used as the prefix of CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Tensor(TensorError::Config(_)) => "config-error",
            Error::Tensor(_) => "tensor-error",
            Error::Format { .. } | Error::Label(_) => "format-error",
            Error::Config { .. } => "config-error",
            Error::Io { .. } => "io-error",
            Error::Checkpoint(_) => "checkpoint-error",
            Error::NonFinite { .. } => "training-error",
            Error::Contract(_) => "contract-error",
            Error::Domain(_) => "domain-error",
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config {
            line: None,
            msg: msg.into(),
        }
    }

    pub(crate) fn config_at(line: usize, msg: impl Into<String>) -> Self {
        Error::Config {
            line: Some(line),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
