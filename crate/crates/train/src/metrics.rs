use serde::{Deserialize, Serialize};

use crate::error::TrainError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub accuracy: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
    pub per_class: Vec<ClassMetrics>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Accuracy plus macro-averaged precision, recall and F1 (0/0 taken as 0).
pub fn compute_metrics(preds: &[usize], labels: &[usize], n_classes: usize) -> Result<Metrics, TrainError> {
    if preds.len() != labels.len() {
        return Err(TrainError::LengthMismatch(preds.len(), labels.len()));
    }
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for (&p, &y) in preds.iter().zip(labels) {
        for class in [p, y] {
            if class >= n_classes {
                return Err(TrainError::Class { class, classes: n_classes });
            }
        }
        confusion[y][p] += 1;
    }
    let n = labels.len();
    let correct: usize = (0..n_classes).map(|c| confusion[c][c]).sum();
    let per_class: Vec<ClassMetrics> = (0..n_classes)
        .map(|c| {
            let tp = confusion[c][c];
            let predicted: usize = (0..n_classes).map(|r| confusion[r][c]).sum();
            let support: usize = confusion[c].iter().sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
            ClassMetrics { class: c, precision, recall, f1, support }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / n_classes as f64;
    Ok(Metrics {
        n,
        accuracy: ratio(correct, n),
        precision_macro: mean(|c| c.precision),
        recall_macro: mean(|c| c.recall),
        f1_macro: mean(|c| c.f1),
        per_class,
        confusion,
    })
}

/// Mean of the clip probability vectors and its argmax (lowest index on ties).
pub fn aggregate_predictions(probs: &[Vec<f64>]) -> (Vec<f64>, usize) {
    assert!(!probs.is_empty(), "aggregation needs at least one clip");
    let c = probs[0].len();
    let mut mean = vec![0.0; c];
    for p in probs {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= probs.len() as f64;
    }
    let mut best = 0;
    for (i, &v) in mean.iter().enumerate() {
        if v > mean[best] {
            best = i;
        }
    }
    (mean, best)
}
