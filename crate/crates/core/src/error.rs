use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, dimensions or variants that do not fit together.
    #[error("configuration error: {0}")]
    Config(String),

    /// A loss turned non-finite during training.
    #[error("training diverged in {stage} at step {step}: loss = {loss}")]
    Diverged {
        stage: &'static str,
        step: usize,
        loss: f64,
    },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("action {action:?} outside box [{lo:?}, {hi:?}]")]
    ActionOutOfBox {
        action: Vec<f64>,
        lo: Vec<f64>,
        hi: Vec<f64>,
    },

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("scripted controller failed to produce {wanted} episodes after {attempts} attempts")]
    ControllerFailure { wanted: usize, attempts: usize },

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("plot error: {0}")]
    Plot(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
