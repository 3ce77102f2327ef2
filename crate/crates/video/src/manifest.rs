//! Manifest schema: one JSON record per video, and one per preprocessed clip.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VideoError};

/// Medication state at recording time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum State {
    #[serde(rename = "ON")]
    On,
    #[serde(rename = "OFF")]
    Off,
}

impl State {
    pub fn as_str(self) -> &'static str {
        match self {
            State::On => "ON",
            State::Off => "OFF",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub subject_id: String,
    pub video: PathBuf,
    pub task: u8,
    pub state: State,
    pub gds: u8,
    pub site: String,
}

impl SampleRecord {
    pub fn validate(&self) -> Result<()> {
        if self.subject_id.is_empty() {
            return Err(VideoError::Manifest("empty subject_id".into()));
        }
        if !(1..=6).contains(&self.task) {
            return Err(VideoError::Manifest(format!(
                "subject {}: task {} outside 1..=6",
                self.subject_id, self.task
            )));
        }
        if self.gds > 30 {
            return Err(VideoError::Manifest(format!(
                "subject {}: gds {} outside 0..=30",
                self.subject_id, self.gds
            )));
        }
        Ok(())
    }

    /// Identifier used for per-video seeding and clip naming.
    pub fn source_id(&self) -> String {
        format!("{}_t{}_{}", self.subject_id, self.task, self.state.as_str())
    }
}

/// A preprocessed clip file with the labels of its parent video.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipRecord {
    pub subject_id: String,
    pub video: PathBuf,
    pub clip: PathBuf,
    pub clip_index: usize,
    pub task: u8,
    pub state: State,
    pub gds: u8,
    pub site: String,
}

impl ClipRecord {
    /// Key shared by all clips of one source video.
    pub fn video_key(&self) -> String {
        format!("{}_t{}_{}", self.subject_id, self.task, self.state.as_str())
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| VideoError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| VideoError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("manifest serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| VideoError::io(path, e))
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<SampleRecord>> {
    let records: Vec<SampleRecord> = read_json(path.as_ref())?;
    for r in &records {
        r.validate()?;
    }
    Ok(records)
}

pub fn save_manifest(path: impl AsRef<Path>, records: &[SampleRecord]) -> Result<()> {
    write_json(path.as_ref(), &records)
}

pub fn load_clip_manifest(path: impl AsRef<Path>) -> Result<Vec<ClipRecord>> {
    read_json(path.as_ref())
}

pub fn save_clip_manifest(path: impl AsRef<Path>, records: &[ClipRecord]) -> Result<()> {
    write_json(path.as_ref(), &records)
}

/// Resolves a manifest-relative path against the manifest's directory.
pub fn resolve(manifest: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        manifest.parent().unwrap_or(Path::new(".")).join(p)
    }
}

/// Distinct subject ids in first-seen order.
pub fn subjects<'a>(ids: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for id in ids {
        if seen.insert(id) {
            out.push(id.to_string());
        }
    }
    out
}
