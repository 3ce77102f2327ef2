use std::path::PathBuf;

use gdsnet_models::ModelError;
use gdsnet_train::TrainError;
use gdsnet_video::VideoError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {msg}")]
    Config { path: PathBuf, msg: String },
    #[error("{0}")]
    Io(String),
    #[error("missing input files:\n  {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join("\n  "))]
    Missing(Vec<PathBuf>),
    #[error("training aborted: {0}")]
    Numeric(String),
}

impl CliError {
    /// 2 usage/config, 3 I/O, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => 2,
            CliError::Io(_) | CliError::Missing(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<VideoError> for CliError {
    fn from(e: VideoError) -> Self {
        match e {
            VideoError::Io { .. } | VideoError::Vten { .. } => CliError::Io(e.to_string()),
            e => CliError::Usage(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Io { .. } | ModelError::Vten { .. } => CliError::Io(e.to_string()),
            e => CliError::Usage(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        if e.is_numeric() {
            return CliError::Numeric(e.to_string());
        }
        match e {
            TrainError::Io { .. } => CliError::Io(e.to_string()),
            TrainError::Video(v) => v.into(),
            TrainError::Model(m) => m.into(),
            e => CliError::Usage(e.to_string()),
        }
    }
}
