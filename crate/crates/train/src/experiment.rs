//! Filter, split, train per fold and score held-out clips at clip, video
//! and subject level.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use gdsnet_models::zoo::build_model;
use gdsnet_models::ModelKind;
use gdsnet_tensor::{ParamStore, Tensor};
use gdsnet_video::pipeline::preprocess;
use gdsnet_video::{ClipRecord, FaceLocalizer, PipelineConfig, RawVideo, SampleRecord, State};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::TrainError;
use crate::folds::{make_grouped_folds, make_loso_folds, Fold};
use crate::label::Task;
use crate::loss::LossKind;
use crate::metrics::{aggregate_predictions, compute_metrics, ClassMetrics, Metrics};
use crate::trainer::{predict_proba, train_model, Example, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StateFilter {
    #[serde(rename = "ON")]
    On,
    #[serde(rename = "OFF")]
    Off,
    #[serde(rename = "both")]
    Both,
}

impl StateFilter {
    pub fn admits(self, s: State) -> bool {
        match self {
            StateFilter::On => s == State::On,
            StateFilter::Off => s == State::Off,
            StateFilter::Both => true,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StateFilter::On => "ON",
            StateFilter::Off => "OFF",
            StateFilter::Both => "both",
        }
    }
}

impl std::str::FromStr for StateFilter {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, TrainError> {
        match s.to_ascii_lowercase().as_str() {
            "on" => Ok(StateFilter::On),
            "off" => Ok(StateFilter::Off),
            "both" => Ok(StateFilter::Both),
            _ => Err(TrainError::Config(format!("unknown state filter `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    Clip,
    Video,
    Subject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSpec {
    pub task: Task,
    pub state_filter: StateFilter,
    pub model: ModelKind,
    pub aggregation: Aggregation,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            task: Task::Binary,
            state_filter: StateFilter::Both,
            model: ModelKind::Swin3dT,
            aggregation: Aggregation::Subject,
        }
    }
}

impl ExperimentSpec {
    /// Experiment label used in summary tables, e.g. `binary/ON`.
    pub fn label(&self) -> String {
        format!("{}/{}", self.task.as_str(), self.state_filter.as_str())
    }
}

/// Anything that carries a subject, medication state and GDS score.
pub trait Labeled {
    fn subject_id(&self) -> &str;
    fn state(&self) -> State;
    fn gds(&self) -> u8;
}

impl Labeled for SampleRecord {
    fn subject_id(&self) -> &str {
        &self.subject_id
    }
    fn state(&self) -> State {
        self.state
    }
    fn gds(&self) -> u8 {
        self.gds
    }
}

impl Labeled for ClipRecord {
    fn subject_id(&self) -> &str {
        &self.subject_id
    }
    fn state(&self) -> State {
        self.state
    }
    fn gds(&self) -> u8 {
        self.gds
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Plan {
    pub subjects: Vec<String>,
    pub records: usize,
    pub folds: Vec<Fold>,
}

/// Applies the state filter and builds folds: leave-one-subject-out, or
/// `cv_folds` label-stratified subject groups.
pub fn plan_experiment<R: Labeled>(
    spec: &ExperimentSpec,
    records: &[R],
    cv_folds: Option<usize>,
    val_fraction: f64,
    seed: u64,
) -> Result<Plan, TrainError> {
    let kept: Vec<&R> = records.iter().filter(|r| spec.state_filter.admits(r.state())).collect();
    let mut label: BTreeMap<String, usize> = BTreeMap::new();
    for r in &kept {
        let t = spec.task.target(r.gds())?;
        if let Some(prev) = label.insert(r.subject_id().to_string(), t) {
            if prev != t {
                return Err(TrainError::Config(format!("subject `{}` has conflicting labels", r.subject_id())));
            }
        }
    }
    let subjects: Vec<String> = label.keys().cloned().collect();
    let strata: Vec<usize> = label.values().copied().collect();
    let folds = match cv_folds {
        None => make_loso_folds(&subjects, val_fraction, seed)?,
        Some(k) => make_grouped_folds(&subjects, Some(&strata), k, val_fraction, seed)?,
    };
    Ok(Plan { subjects, records: kept.len(), folds })
}

/// A preprocessed clip with its manifest entry.
#[derive(Debug, Clone)]
pub struct Sample {
    pub record: ClipRecord,
    pub clip: Tensor<f32>,
}

/// Runs the preprocessing pipeline on one recording; clips are named
/// `clips/{source}_c{index}.vten`.
pub fn clip_samples(
    record: &SampleRecord,
    video: &RawVideo,
    loc: &dyn FaceLocalizer,
    cfg: &PipelineConfig,
) -> Result<Vec<Sample>, TrainError> {
    Ok(preprocess(video, loc, cfg)?
        .into_iter()
        .map(|c| Sample {
            record: ClipRecord {
                subject_id: record.subject_id.clone(),
                video: record.video.clone(),
                clip: Path::new("clips").join(format!("{}_c{:02}.vten", record.source_id(), c.clip_index)),
                clip_index: c.clip_index,
                task: record.task,
                state: record.state,
                gds: record.gds,
                site: record.site.clone(),
            },
            clip: c.frames,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct ExperimentConfig {
    /// Overrides merged onto the model's default configuration.
    pub model: Option<Value>,
    /// `None` runs the full train config defaults for `spec.model`.
    pub train: Option<TrainConfig>,
    /// `None` is leave-one-subject-out.
    pub cv_folds: Option<usize>,
    pub seed: u64,
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipPrediction {
    pub subject: String,
    pub video: String,
    pub clip_index: usize,
    pub fold: usize,
    pub target: usize,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub subject: String,
    pub epoch_stopped: usize,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub protocol: String,
    pub subjects: usize,
    pub clips: usize,
    pub parameters: usize,
    pub accuracy: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: Vec<Vec<usize>>,
    pub levels: BTreeMap<Aggregation, Metrics>,
    pub folds: Vec<FoldSummary>,
    #[serde(skip)]
    pub predictions: Vec<ClipPrediction>,
}

fn level_metrics(preds: &[ClipPrediction], level: Aggregation, classes: usize) -> Result<Metrics, TrainError> {
    let mut groups: BTreeMap<String, (usize, Vec<Vec<f64>>)> = BTreeMap::new();
    for (i, p) in preds.iter().enumerate() {
        let key = match level {
            Aggregation::Clip => format!("{i:08}"),
            Aggregation::Video => p.video.clone(),
            Aggregation::Subject => p.subject.clone(),
        };
        groups.entry(key).or_insert((p.target, Vec::new())).1.push(p.probs.clone());
    }
    let (labels, predicted): (Vec<usize>, Vec<usize>) =
        groups.values().map(|(t, probs)| (*t, aggregate_predictions(probs).1)).unzip();
    compute_metrics(&predicted, &labels, classes)
}

/// Trains one model per fold and scores every held-out clip. Per-fold RNG
/// streams are seeded `seed ⊕ fold`; with `log_dir` each fold's epoch log is
/// written there as JSON lines.
pub fn run_experiment(
    spec: &ExperimentSpec,
    samples: &[Sample],
    cfg: &ExperimentConfig,
    log_dir: Option<&Path>,
) -> Result<ExperimentReport, TrainError> {
    let base = cfg.train.clone().unwrap_or_else(|| TrainConfig::for_model(spec.model));
    base.validate()?;
    let records: Vec<ClipRecord> = samples.iter().map(|s| s.record.clone()).collect();
    let plan = plan_experiment(spec, &records, cfg.cv_folds, base.val_fraction, cfg.seed)?;
    let kept: Vec<&Sample> = samples.iter().filter(|s| spec.state_filter.admits(s.record.state)).collect();
    let shape = kept[0].clip.shape().to_vec();
    if shape.len() != 4 || kept.iter().any(|s| s.clip.shape() != shape.as_slice()) {
        return Err(TrainError::Config(format!("clips must share one [T, H, W, C] shape, first is {shape:?}")));
    }
    let input = [shape[0], shape[1], shape[2], shape[3]];
    let classes = spec.task.classes();
    let loss = base.loss.unwrap_or(match spec.task {
        Task::Binary => LossKind::Bce,
        Task::Multiclass => LossKind::SparseCce,
    });
    let targets: Vec<usize> = kept.iter().map(|s| spec.task.target(s.record.gds)).collect::<Result<_, _>>()?;
    if let Some(dir) = log_dir {
        fs::create_dir_all(dir).map_err(|source| TrainError::Io { path: dir.into(), source })?;
    }
    let mut predictions = Vec::new();
    let mut folds = Vec::new();
    let mut parameters = 0;
    for fold in &plan.folds {
        let fold_seed = cfg.seed ^ fold.index as u64;
        let pick = |names: &[String]| -> Vec<Example> {
            kept.iter()
                .zip(&targets)
                .filter(|(s, _)| names.contains(&s.record.subject_id))
                .map(|(s, &t)| Example { clip: &s.clip, target: t, subject: &s.record.subject_id })
                .collect()
        };
        let (train, val) = (pick(&fold.train), pick(&fold.val));
        let mut store = ParamStore::<f32>::new();
        let model = build_model::<f32>(spec.model, cfg.model.as_ref(), classes, input, &mut store, fold_seed)?;
        parameters = store.num_trainable();
        let tcfg = TrainConfig { seed: fold_seed, ..base.clone() };
        log::info!("fold {}: test {:?}, {} train / {} val clips", fold.index, fold.test, train.len(), val.len());
        let outcome = train_model(&model, &mut store, &train, &val, &tcfg, loss, &fold.test)?;
        if let Some(dir) = log_dir {
            let path = dir.join(format!("fold_{:03}.jsonl", fold.index));
            let text: String = outcome
                .log
                .iter()
                .map(|r| serde_json::to_string(r).expect("epoch record serializes") + "\n")
                .collect();
            fs::write(&path, text).map_err(|source| TrainError::Io { path, source })?;
        }
        for subject in &fold.test {
            folds.push(FoldSummary {
                fold: fold.index,
                subject: subject.clone(),
                epoch_stopped: outcome.epochs_run,
                best_epoch: outcome.best_epoch,
            });
        }
        for (s, &t) in kept.iter().zip(&targets) {
            if fold.test.contains(&s.record.subject_id) {
                predictions.push(ClipPrediction {
                    subject: s.record.subject_id.clone(),
                    video: s.record.video_key(),
                    clip_index: s.record.clip_index,
                    fold: fold.index,
                    target: t,
                    probs: predict_proba(&model, &store, &s.clip)?,
                });
            }
        }
    }
    let mut levels = BTreeMap::new();
    for level in [Aggregation::Clip, Aggregation::Video, Aggregation::Subject] {
        levels.insert(level, level_metrics(&predictions, level, classes)?);
    }
    let head = levels[&spec.aggregation].clone();
    Ok(ExperimentReport {
        spec: spec.clone(),
        protocol: match cfg.cv_folds {
            None => "loso".into(),
            Some(k) => format!("grouped-{k}"),
        },
        subjects: plan.subjects.len(),
        clips: kept.len(),
        parameters,
        accuracy: head.accuracy,
        precision_macro: head.precision_macro,
        recall_macro: head.recall_macro,
        f1_macro: head.f1_macro,
        per_class: head.per_class,
        confusion: head.confusion,
        levels,
        folds,
        predictions,
    })
}
