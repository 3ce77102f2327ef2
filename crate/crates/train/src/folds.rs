//! Subject-level splits. Every clip of a subject follows its subject, so a
//! split over subject ids is a split over clips.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::TrainError;
use crate::mix;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Fold {
    pub index: usize,
    pub test: Vec<String>,
    pub train: Vec<String>,
    pub val: Vec<String>,
}

impl Fold {
    pub fn role(&self, subject: &str) -> Option<&'static str> {
        let has = |v: &[String]| v.iter().any(|s| s == subject);
        if has(&self.test) {
            Some("test")
        } else if has(&self.val) {
            Some("val")
        } else if has(&self.train) {
            Some("train")
        } else {
            None
        }
    }
}

fn distinct(subjects: &[String]) -> Result<Vec<String>, TrainError> {
    let set: Vec<String> = subjects.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if set.len() < 3 {
        return Err(TrainError::TooFewSubjects { found: set.len(), needed: 3 });
    }
    Ok(set)
}

/// Moves `round(fraction · n)` (at least 1) seeded picks from `rest` into validation.
fn split_val(index: usize, test: Vec<String>, mut rest: Vec<String>, val_fraction: f64, seed: u64) -> Fold {
    let n_val = ((rest.len() as f64 * val_fraction).round() as usize).clamp(1, rest.len() - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, index as u64 + 1));
    rest.shuffle(&mut rng);
    let mut val = rest.split_off(rest.len() - n_val);
    rest.sort();
    val.sort();
    Fold { index, test, train: rest, val }
}

fn check_fraction(val_fraction: f64) -> Result<(), TrainError> {
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(TrainError::Config(format!("val_fraction {val_fraction} outside [0, 1)")));
    }
    Ok(())
}

/// One fold per distinct subject, in sorted subject order.
pub fn make_loso_folds(subjects: &[String], val_fraction: f64, seed: u64) -> Result<Vec<Fold>, TrainError> {
    check_fraction(val_fraction)?;
    let set = distinct(subjects)?;
    Ok(set
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let rest = set.iter().filter(|t| *t != s).cloned().collect();
            split_val(i, vec![s.clone()], rest, val_fraction, seed)
        })
        .collect())
}

/// `k` folds of whole subjects. With `strata` (one label per entry of
/// `subjects`) each stratum is dealt round-robin so folds stay balanced.
pub fn make_grouped_folds(
    subjects: &[String],
    strata: Option<&[usize]>,
    k: usize,
    val_fraction: f64,
    seed: u64,
) -> Result<Vec<Fold>, TrainError> {
    check_fraction(val_fraction)?;
    let set = distinct(subjects)?;
    if k < 2 || k > set.len() {
        return Err(TrainError::Config(format!("{k} folds for {} subjects", set.len())));
    }
    let label = |s: &String| match strata {
        Some(l) => subjects.iter().position(|t| t == s).map_or(0, |i| l[i]),
        None => 0,
    };
    let mut order: Vec<(usize, String)> = set.iter().map(|s| (label(s), s.clone())).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0x6f1d));
    order.shuffle(&mut rng);
    order.sort_by_key(|(l, _)| *l);
    let mut groups = vec![Vec::new(); k];
    for (i, (_, s)) in order.into_iter().enumerate() {
        groups[i % k].push(s);
    }
    Ok(groups
        .into_iter()
        .enumerate()
        .map(|(i, mut test)| {
            test.sort();
            let rest = set.iter().filter(|s| !test.contains(s)).cloned().collect();
            split_val(i, test, rest, val_fraction, seed)
        })
        .collect())
}
