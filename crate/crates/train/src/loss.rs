use gdsnet_tensor::{Float, Tape, Var};
use serde::{Deserialize, Serialize};

use crate::error::TrainError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Bce,
    SparseCce,
}

/// Mean loss over `logits: [B, C]`. BCE reads two-class logits through their
/// difference `z = l₁ − l₀`, so `σ(z)` is the class-1 softmax probability.
pub fn loss_fn<T: Float>(tape: &mut Tape<T>, logits: Var, targets: &[usize], kind: LossKind) -> Result<Var, TrainError> {
    let shape = tape.shape(logits).to_vec();
    if shape.len() != 2 || shape[0] != targets.len() {
        return Err(TrainError::Config(format!("logits {shape:?} for {} targets", targets.len())));
    }
    let classes = shape[1];
    if let Some(&class) = targets.iter().find(|&&t| t >= classes) {
        return Err(TrainError::Class { class, classes });
    }
    Ok(match kind {
        LossKind::SparseCce => tape.cross_entropy(logits, targets)?,
        LossKind::Bce => {
            let z = match classes {
                1 => logits,
                2 => {
                    let a = tape.narrow(logits, 1, 1, 1)?;
                    let b = tape.narrow(logits, 1, 0, 1)?;
                    tape.sub(a, b)?
                }
                _ => return Err(TrainError::Config(format!("binary cross-entropy on {classes} classes"))),
            };
            let ys: Vec<f64> = targets.iter().map(|&t| t as f64).collect();
            tape.bce_with_logits(z, &ys)?
        }
    })
}
