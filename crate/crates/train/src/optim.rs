use gdsnet_tensor::{Float, ParamStore};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    #[serde(rename = "adamw")]
    AdamW,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay, applied only by AdamW.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 }
    }
}

/// Adam with bias correction; AdamW additionally shrinks each weight by
/// `lr·λ·w` before the moment update.
#[derive(Debug, Clone)]
pub struct Adam {
    pub kind: OptimizerKind,
    pub cfg: AdamConfig,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(kind: OptimizerKind, cfg: AdamConfig) -> Self {
        Adam { kind, cfg, t: 0, m: Vec::new(), v: Vec::new() }
    }

    /// One update from the gradients held in `store`; parameters without a
    /// gradient are treated as having zero gradient.
    pub fn step<T: Float>(&mut self, store: &mut ParamStore<T>, lr: f64) {
        if self.m.is_empty() {
            self.m = store.iter().map(|(_, p)| vec![0.0; p.numel()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let AdamConfig { beta1, beta2, eps, weight_decay } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        let decay = if self.kind == OptimizerKind::AdamW { lr * weight_decay } else { 0.0 };
        for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let grad = p.grad.as_ref().map(|g| g.data().to_vec());
            let w = p.value.data_mut();
            for i in 0..w.len() {
                let g = grad.as_ref().map_or(0.0, |g| g[i].as_f64());
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let mut x = w[i].as_f64();
                x -= decay * x;
                x -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                w[i] = T::from_f64(x);
            }
        }
    }
}
