use std::path::PathBuf;

use gdsnet_models::ModelError;
use gdsnet_tensor::TensorError;
use gdsnet_video::VideoError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("GDS score {0} outside 0..=30")]
    Score(i64),
    #[error("need at least {needed} subjects, found {found}")]
    TooFewSubjects { found: usize, needed: usize },
    #[error("held-out subject `{0}` reached a training batch")]
    Leakage(String),
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("non-finite value in epoch {epoch}, batch {batch}: {detail}")]
    NonFinite { epoch: usize, batch: usize, detail: String },
    #[error("length mismatch: {0} predictions vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("class {class} out of range for {classes} classes")]
    Class { class: usize, classes: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Video(#[from] VideoError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl TrainError {
    /// Training diverged; the CLI maps this to its numeric-failure exit code.
    pub fn is_numeric(&self) -> bool {
        matches!(self, TrainError::NonFinite { .. })
            || matches!(self, TrainError::Tensor(TensorError::NonFinite { .. }))
    }
}
