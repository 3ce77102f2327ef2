use serde::{Deserialize, Serialize};

use crate::error::TrainError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Absent,
    Mild,
    Severe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Binary {
    Absent,
    Present,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GdsLabel {
    pub score: u8,
    pub severity: Severity,
    pub binary: Binary,
}

/// 0–9 absent, 10–19 mild, 20–30 severe.
pub fn gds_to_label(score: i64) -> Result<GdsLabel, TrainError> {
    let severity = match score {
        0..=9 => Severity::Absent,
        10..=19 => Severity::Mild,
        20..=30 => Severity::Severe,
        _ => return Err(TrainError::Score(score)),
    };
    let binary = if severity == Severity::Absent { Binary::Absent } else { Binary::Present };
    Ok(GdsLabel { score: score as u8, severity, binary })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Binary,
    Multiclass,
}

impl Task {
    pub fn classes(self) -> usize {
        match self {
            Task::Binary => 2,
            Task::Multiclass => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Binary => "binary",
            Task::Multiclass => "multiclass",
        }
    }

    /// Class index of a GDS score for this task.
    pub fn target(self, score: u8) -> Result<usize, TrainError> {
        let l = gds_to_label(score as i64)?;
        Ok(match self {
            Task::Binary => (l.binary == Binary::Present) as usize,
            Task::Multiclass => l.severity as usize,
        })
    }
}

impl std::str::FromStr for Task {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, TrainError> {
        match s {
            "binary" => Ok(Task::Binary),
            "multiclass" => Ok(Task::Multiclass),
            _ => Err(TrainError::Config(format!("unknown task `{s}`"))),
        }
    }
}
