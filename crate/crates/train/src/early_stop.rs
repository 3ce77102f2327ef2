#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    /// New best; weights should be snapshotted.
    Improved,
    Continue,
    Stop,
}

/// Tracks the best validation loss; epochs are 1-based.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    pub patience: usize,
    pub min_delta: f64,
    pub best: f64,
    pub best_epoch: usize,
    pub bad_epochs: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        EarlyStopping { patience, min_delta, best: f64::INFINITY, best_epoch: 0, bad_epochs: 0 }
    }

    pub fn update(&mut self, epoch: usize, val_loss: f64) -> Decision {
        if val_loss < self.best - self.min_delta {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.bad_epochs = 0;
            Decision::Improved
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.patience {
                Decision::Stop
            } else {
                Decision::Continue
            }
        }
    }
}

/// Replays a loss history; the answer for its last epoch.
pub fn early_stop_check(history: &[f64], patience: usize) -> Decision {
    assert!(!history.is_empty(), "empty validation history");
    let mut es = EarlyStopping::new(patience, 1e-4);
    let mut d = Decision::Continue;
    for (i, &l) in history.iter().enumerate() {
        d = es.update(i + 1, l);
    }
    d
}
