//! Run configuration: one JSON document, every section optional. Command-line
//! flags override file values.

use std::fs;
use std::path::{Path, PathBuf};

use gdsnet_models::zoo::merge_json;
use gdsnet_models::ModelKind;
use gdsnet_train::{Aggregation, StateFilter, Task, TrainConfig};
use gdsnet_video::{PipelineConfig, SynthSpec};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Localizer {
    /// Largest centred square.
    #[default]
    Center,
    /// Per-frame rectangles from `<video>.faces.json`.
    Sidecar,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub manifest: Option<PathBuf>,
    pub clips: Option<PathBuf>,
    pub pipeline: PipelineConfig,
    pub localizer: Localizer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub name: ModelKind,
    /// Merged onto the architecture's default configuration.
    pub config: Option<Value>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { name: ModelKind::Swin3dT, config: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub task: Task,
    pub state_filter: StateFilter,
    pub aggregation: Aggregation,
    /// Subject-grouped folds instead of leave-one-subject-out.
    pub cv_folds: Option<usize>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            task: Task::Binary,
            state_filter: StateFilter::Both,
            aggregation: Aggregation::Subject,
            cv_folds: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub synth: SynthSpec,
    pub model: ModelConfig,
    /// Partial train settings over the chosen model's defaults.
    pub train: Option<Value>,
    pub experiment: ExperimentSection,
    pub output: Option<PathBuf>,
    pub seed: u64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config { path: path.into(), msg: e.to_string() })
    }

    /// Published defaults for the model with the `train` section on top.
    pub fn train_config(&self, model: ModelKind) -> Result<TrainConfig, CliError> {
        let mut base = serde_json::to_value(TrainConfig::for_model(model)).expect("train config serializes");
        if let Some(patch) = &self.train {
            merge_json(&mut base, patch);
        }
        let cfg: TrainConfig =
            serde_json::from_value(base).map_err(|e| CliError::Usage(format!("train section: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
