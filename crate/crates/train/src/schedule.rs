use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrDecay {
    Plateau,
    Cosine,
    Constant,
}

/// `lr₀ · ½ · (1 + cos(π·e / max_epochs))`.
pub fn cosine_lr(base: f64, epoch: usize, max_epochs: usize) -> f64 {
    let e = epoch.min(max_epochs) as f64;
    base * 0.5 * (1.0 + (std::f64::consts::PI * e / max_epochs as f64).cos())
}

/// Reduce-on-plateau with an absolute improvement threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Plateau {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub threshold: f64,
    pub best: f64,
    pub bad_epochs: usize,
}

impl Plateau {
    pub fn new(lr: f64) -> Self {
        Plateau { lr, factor: 0.1, patience: 5, threshold: 1e-4, best: f64::INFINITY, bad_epochs: 0 }
    }

    pub fn step(&mut self, val_loss: f64) -> f64 {
        if val_loss < self.best - self.threshold {
            self.best = val_loss;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.patience {
                self.lr *= self.factor;
                self.bad_epochs = 0;
            }
        }
        self.lr
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    Constant(f64),
    Plateau(Plateau),
    Cosine { base: f64, max_epochs: usize, epoch: usize },
}

impl Schedule {
    pub fn new(kind: LrDecay, lr: f64, max_epochs: usize) -> Self {
        match kind {
            LrDecay::Constant => Schedule::Constant(lr),
            LrDecay::Plateau => Schedule::Plateau(Plateau::new(lr)),
            LrDecay::Cosine => Schedule::Cosine { base: lr, max_epochs, epoch: 0 },
        }
    }

    pub fn lr(&self) -> f64 {
        match self {
            Schedule::Constant(lr) => *lr,
            Schedule::Plateau(p) => p.lr,
            Schedule::Cosine { base, max_epochs, epoch } => cosine_lr(*base, *epoch, *max_epochs),
        }
    }

    /// Called once at the end of each epoch; returns the rate for the next one.
    pub fn step(&mut self, val_loss: f64) -> f64 {
        match self {
            Schedule::Constant(lr) => *lr,
            Schedule::Plateau(p) => p.step(val_loss),
            Schedule::Cosine { base, max_epochs, epoch } => {
                *epoch += 1;
                cosine_lr(*base, *epoch, *max_epochs)
            }
        }
    }
}
