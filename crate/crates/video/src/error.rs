use std::path::PathBuf;

use gdsnet_tensor::vten::VtenError;
use gdsnet_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VideoError {
    #[error("invalid video: {0}")]
    InvalidVideo(String),
    #[error("localization failed at frame {frame}: {msg}")]
    Localization { frame: usize, msg: String },
    #[error("video length {length} is not divisible by clip length {clip}")]
    Segment { length: usize, clip: usize },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("{path}: {source}")]
    Vten { path: PathBuf, source: VtenError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl VideoError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        VideoError::Io { path: path.into(), source }
    }

    /// True for failures reading or writing files.
    pub fn is_io(&self) -> bool {
        matches!(self, VideoError::Io { .. } | VideoError::Vten { .. })
    }
}

pub type Result<T, E = VideoError> = std::result::Result<T, E>;
