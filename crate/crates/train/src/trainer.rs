use std::collections::BTreeSet;

use gdsnet_models::{ModelKind, VideoModel};
use gdsnet_tensor::{vten, ParamStore, Tape, Tensor, TensorError};
use gdsnet_video::{augment, AugmentConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::early_stop::{Decision, EarlyStopping};
use crate::error::TrainError;
use crate::loss::{loss_fn, LossKind};
use crate::mix;
use crate::optim::{Adam, AdamConfig, OptimizerKind};
use crate::schedule::{LrDecay, Schedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub lr_decay: LrDecay,
    pub batch_size: usize,
    /// `None` picks BCE for binary tasks and sparse CCE otherwise.
    pub loss: Option<LossKind>,
    pub patience: usize,
    pub min_delta: f64,
    pub val_fraction: f64,
    pub adam: AdamConfig,
    /// Applied to training clips only.
    pub augment: AugmentConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::for_model(ModelKind::Vivit)
    }
}

impl TrainConfig {
    /// Published hyperparameters for each architecture.
    pub fn for_model(kind: ModelKind) -> Self {
        let (optimizer, lr, lr_decay) = match kind {
            ModelKind::Vivit | ModelKind::Swin3dT => (OptimizerKind::Adam, 1e-4, LrDecay::Plateau),
            ModelKind::CnnLstm => (OptimizerKind::AdamW, 1e-3, LrDecay::Cosine),
        };
        TrainConfig {
            max_epochs: 200,
            optimizer,
            lr,
            lr_decay,
            batch_size: 8,
            loss: None,
            patience: 10,
            min_delta: 1e-4,
            val_fraction: 0.1,
            adam: AdamConfig::default(),
            augment: AugmentConfig::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.max_epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return bad("max_epochs, batch_size and patience must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad(format!("val_fraction {}", self.val_fraction));
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || a.eps <= 0.0 || a.weight_decay < 0.0 {
            return bad(format!("adam settings {a:?}"));
        }
        self.augment.validate()?;
        Ok(())
    }
}

/// One labeled training clip `[T, H, W, C]`.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub clip: &'a Tensor<f32>,
    pub target: usize,
    pub subject: &'a str,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
    pub best_epoch: usize,
    pub stopped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub log: Vec<EpochRecord>,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub early_stopped: bool,
    /// SHA-256 of the restored (best) weights.
    pub weights_hash: String,
}

/// SHA-256 over every parameter's name and VTEN encoding, in registration order.
pub fn weights_hash(store: &ParamStore<f32>) -> String {
    let mut h = Sha256::new();
    for (_, p) in store.iter() {
        h.update(p.name.as_bytes());
        h.update([0]);
        h.update(vten::encode(&p.value));
    }
    hex::encode(h.finalize())
}

fn non_finite(epoch: usize, batch: usize) -> impl Fn(TensorError) -> TrainError {
    move |e| match e {
        TensorError::NonFinite { op, count } => TrainError::NonFinite {
            epoch,
            batch,
            detail: format!("{count} non-finite values from `{op}`"),
        },
        e => TrainError::Tensor(e),
    }
}

fn example_loss<M: VideoModel<f32>>(
    model: &M,
    store: &ParamStore<f32>,
    tape: &mut Tape<f32>,
    clip: Tensor<f32>,
    target: usize,
    kind: LossKind,
) -> Result<gdsnet_tensor::Var, TrainError> {
    let c = tape.constant(clip)?;
    let y = model.forward(tape, store, c)?;
    let y = tape.reshape(y, &[1, model.classes()])?;
    loss_fn(tape, y, &[target], kind)
}

/// Mean loss over `set` without augmentation or gradient.
pub fn evaluate_loss<M: VideoModel<f32>>(
    model: &M,
    store: &ParamStore<f32>,
    set: &[Example],
    kind: LossKind,
) -> Result<f64, TrainError> {
    let mut total = 0.0;
    for ex in set {
        let mut tape = Tape::new();
        let l = example_loss(model, store, &mut tape, ex.clip.clone(), ex.target, kind)?;
        total += tape.value(l).data()[0] as f64;
    }
    Ok(total / set.len().max(1) as f64)
}

/// Class probabilities for one clip.
pub fn predict_proba<M: VideoModel<f32>>(model: &M, store: &ParamStore<f32>, clip: &Tensor<f32>) -> Result<Vec<f64>, TrainError> {
    let mut tape = Tape::new();
    let c = tape.constant(clip.clone())?;
    let y = model.forward(&mut tape, store, c)?;
    let logits: Vec<f64> = tape.value(y).data().iter().map(|&v| v as f64).collect();
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
    Ok(logits.iter().map(|l| (l - m).exp() / z).collect())
}

/// Mini-batch training with seeded per-epoch shuffling, the configured
/// schedule and early stopping on validation loss (training loss when `val`
/// is empty). The best weights are left in `store` on return.
pub fn train_model<M: VideoModel<f32>>(
    model: &M,
    store: &mut ParamStore<f32>,
    train: &[Example],
    val: &[Example],
    cfg: &TrainConfig,
    loss: LossKind,
    held_out: &[String],
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let held: BTreeSet<&str> = held_out.iter().map(String::as_str).collect();
    if let Some(ex) = val.iter().find(|e| held.contains(e.subject)) {
        return Err(TrainError::Leakage(ex.subject.to_string()));
    }
    let mut opt = Adam::new(cfg.optimizer, cfg.adam);
    let mut sched = Schedule::new(cfg.lr_decay, cfg.lr, cfg.max_epochs);
    let mut stopper = EarlyStopping::new(cfg.patience, cfg.min_delta);
    let mut best = store.snapshot();
    let mut log = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut early_stopped = false;
    for epoch in 1..=cfg.max_epochs {
        let lr = sched.lr();
        let epoch_seed = mix(cfg.seed, epoch as u64);
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
        let mut total = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let wrap = non_finite(epoch, b);
            store.zero_grad();
            for &i in batch {
                let ex = &train[i];
                if held.contains(ex.subject) {
                    return Err(TrainError::Leakage(ex.subject.to_string()));
                }
                let clip = augment(ex.clip, &cfg.augment, mix(epoch_seed, i as u64))?;
                let mut tape = Tape::new();
                let l = example_loss(model, store, &mut tape, clip, ex.target, loss).map_err(|e| match e {
                    TrainError::Tensor(t) => wrap(t),
                    e => e,
                })?;
                let value = tape.value(l).data()[0] as f64;
                if !value.is_finite() {
                    return Err(TrainError::NonFinite { epoch, batch: b, detail: format!("loss {value}") });
                }
                total += value;
                let scaled = tape.scale(l, 1.0 / batch.len() as f64)?;
                tape.backward(scaled, store)?;
            }
            let bad = store.iter().any(|(_, p)| p.grad.as_ref().is_some_and(|g| !g.is_finite()));
            if bad {
                return Err(TrainError::NonFinite { epoch, batch: b, detail: "gradient".into() });
            }
            opt.step(store, lr);
        }
        let train_loss = total / train.len() as f64;
        let val_loss = if val.is_empty() { train_loss } else { evaluate_loss(model, store, val, loss)? };
        if !val_loss.is_finite() {
            return Err(TrainError::NonFinite { epoch, batch: 0, detail: format!("validation loss {val_loss}") });
        }
        let decision = stopper.update(epoch, val_loss);
        if decision == Decision::Improved {
            best = store.snapshot();
        }
        sched.step(val_loss);
        let stopped = decision == Decision::Stop;
        log::info!("epoch {epoch}: train {train_loss:.5} val {val_loss:.5} lr {lr:.2e}");
        log.push(EpochRecord { epoch, train_loss, val_loss, lr, best_epoch: stopper.best_epoch, stopped });
        if stopped {
            early_stopped = true;
            break;
        }
    }
    store.restore(&best);
    Ok(TrainOutcome {
        epochs_run: log.len(),
        best_epoch: stopper.best_epoch,
        best_val_loss: stopper.best,
        early_stopped,
        weights_hash: weights_hash(store),
        log,
    })
}
