//! Turns raw face videos into normalized fixed-length clips, plus the seeded
//! synthetic corpus used in place of clinical recordings.

pub mod augment;
pub mod error;
pub mod localize;
pub mod manifest;
pub mod pipeline;
pub mod synth;

pub use augment::{augment, AugmentConfig};
pub use error::{Result, VideoError};
pub use localize::{CenterSquare, FaceLocalizer, Rect, SidecarLocalizer};
pub use manifest::{ClipRecord, SampleRecord, State};
pub use pipeline::{Clip, PipelineConfig, RawVideo};
pub use synth::{SynthRecord, SynthSpec};

/// 64-bit FNV-1a, used to derive stable per-video seeds from source ids.
pub fn stable_hash(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Seed for one video: global seed mixed with the hash of its source id.
pub fn video_seed(global: u64, source_id: &str) -> u64 {
    global ^ stable_hash(source_id)
}
