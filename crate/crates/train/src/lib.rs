//! Training and evaluation harness: losses, Adam/AdamW, learning-rate
//! schedules, early stopping, subject-grouped cross-validation and metrics.

pub mod early_stop;
pub mod error;
pub mod experiment;
pub mod folds;
pub mod label;
pub mod loss;
pub mod metrics;
pub mod optim;
pub mod schedule;
pub mod trainer;

pub use early_stop::{early_stop_check, Decision, EarlyStopping};
pub use error::TrainError;
pub use experiment::{
    clip_samples, plan_experiment, run_experiment, Aggregation, ExperimentConfig, ExperimentReport, ExperimentSpec, Labeled, Plan,
    Sample, StateFilter,
};
pub use folds::{make_grouped_folds, make_loso_folds, Fold};
pub use label::{gds_to_label, Binary, GdsLabel, Severity, Task};
pub use loss::{loss_fn, LossKind};
pub use metrics::{aggregate_predictions, compute_metrics, ClassMetrics, Metrics};
pub use optim::{Adam, AdamConfig, OptimizerKind};
pub use schedule::{cosine_lr, LrDecay, Plateau, Schedule};
pub use trainer::{predict_proba, train_model, weights_hash, EpochRecord, Example, TrainConfig, TrainOutcome};

/// SplitMix64 finalizer over `seed ^ salt·φ`; derives independent RNG streams.
pub fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
