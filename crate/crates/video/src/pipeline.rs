//! Preprocessing chain: face crop and resize, length standardization,
//! histogram equalization, clip segmentation and pixel normalization.

use gdsnet_tensor::{Element, Float, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Result, VideoError};
use crate::localize::{FaceLocalizer, Rect};

/// Raw u8 frames `[T, H, W, 3]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawVideo {
    pub frames: Tensor<u8>,
    pub fps: f32,
    pub source_id: String,
}

impl RawVideo {
    pub fn new(frames: Tensor<u8>, fps: f32, source_id: impl Into<String>) -> Result<Self> {
        let s = frames.shape();
        if s.len() != 4 || s[3] != 3 {
            return Err(VideoError::InvalidVideo(format!(
                "expected [T, H, W, 3] frames, got {s:?}"
            )));
        }
        Ok(RawVideo {
            frames,
            fps,
            source_id: source_id.into(),
        })
    }
}

/// Normalized clip `[F, S, S, 3]` with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip<T = f32> {
    pub frames: Tensor<T>,
    pub parent_id: String,
    pub clip_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub side: usize,
    pub length: usize,
    pub clip_len: usize,
    pub equalize: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            side: 224,
            length: 300,
            clip_len: 30,
            equalize: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.side == 0 || self.length == 0 || self.clip_len == 0 {
            return Err(VideoError::Config("side, length and clip_len must be positive".into()));
        }
        if !self.length.is_multiple_of(self.clip_len) {
            return Err(VideoError::Segment {
                length: self.length,
                clip: self.clip_len,
            });
        }
        Ok(())
    }
}

fn frame_dims<T: Element>(frames: &Tensor<T>) -> (usize, usize, usize, usize) {
    let s = frames.shape();
    (s[0], s[1], s[2], s[3])
}

/// Bilinear resize of the `rect` region of one HWC frame to `side`×`side`,
/// sampling at pixel centers with edge clamping.
pub fn resize_region(frame: &[u8], width: usize, channels: usize, rect: Rect, side: usize) -> Vec<u8> {
    let mut out = vec![0u8; side * side * channels];
    let sy = rect.h as f64 / side as f64;
    let sx = rect.w as f64 / side as f64;
    let taps = |dst: usize, scale: f64, len: usize| {
        let src = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
        let i0 = src.floor() as usize;
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, src - i0 as f64)
    };
    for oy in 0..side {
        let (y0, y1, fy) = taps(oy, sy, rect.h);
        for ox in 0..side {
            let (x0, x1, fx) = taps(ox, sx, rect.w);
            for c in 0..channels {
                let px = |y: usize, x: usize| frame[((rect.y + y) * width + rect.x + x) * channels + c] as f64;
                let top = px(y0, x0) * (1.0 - fx) + px(y0, x1) * fx;
                let bot = px(y1, x0) * (1.0 - fx) + px(y1, x1) * fx;
                let v = top * (1.0 - fy) + bot * fy;
                out[(oy * side + ox) * channels + c] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    out
}

/// Crops every frame to its localized face rectangle and resizes to `side`×`side`.
pub fn localize_and_resize(frames: &Tensor<u8>, loc: &dyn FaceLocalizer, side: usize) -> Result<Tensor<u8>> {
    let (t, h, w, c) = frame_dims(frames);
    let frame_len = h * w * c;
    let mut out = Vec::with_capacity(t * side * side * c);
    for (i, frame) in frames.data().chunks(frame_len).enumerate() {
        let rect = loc.locate(i, h, w, frame)?;
        rect.check(i, h, w)?;
        out.extend(resize_region(frame, w, c, rect, side));
    }
    Ok(Tensor::new(vec![t, side, side, c], out)?)
}

/// Trims to the first `length` frames, or pads by cycling from frame 0.
pub fn standardize_length<T: Element>(frames: &Tensor<T>, length: usize) -> Result<Tensor<T>> {
    let s = frames.shape();
    let t = s[0];
    if t == length {
        return Ok(frames.clone());
    }
    let frame_len = frames.numel() / t;
    let mut out = Vec::with_capacity(length * frame_len);
    for i in 0..length {
        let src = i % t;
        out.extend_from_slice(&frames.data()[src * frame_len..(src + 1) * frame_len]);
    }
    let mut shape = s.to_vec();
    shape[0] = length;
    Ok(Tensor::new(shape, out)?)
}

/// Splits along time into contiguous blocks of `clip_len` frames.
pub fn segment_clips<T: Element>(frames: &Tensor<T>, clip_len: usize) -> Result<Vec<Tensor<T>>> {
    let s = frames.shape();
    if clip_len == 0 || !s[0].is_multiple_of(clip_len) {
        return Err(VideoError::Segment {
            length: s[0],
            clip: clip_len,
        });
    }
    let block = frames.numel() / s[0] * clip_len;
    let mut shape = s.to_vec();
    shape[0] = clip_len;
    frames
        .data()
        .chunks(block)
        .map(|c| Ok(Tensor::new(shape.clone(), c.to_vec())?))
        .collect()
}

/// Concatenates clips back along time.
pub fn concat_clips<T: Element>(clips: &[Tensor<T>]) -> Result<Tensor<T>> {
    let first = clips
        .first()
        .ok_or_else(|| VideoError::InvalidVideo("no clips to concatenate".into()))?;
    let mut shape = first.shape().to_vec();
    shape[0] = clips.iter().map(|c| c.shape()[0]).sum();
    let data = clips.iter().flat_map(|c| c.data().iter().copied()).collect();
    Ok(Tensor::new(shape, data)?)
}

pub fn normalize_pixels<T: Float>(frames: &Tensor<u8>) -> Tensor<T> {
    frames.map(|v| T::from_f64(v as f64 / 255.0))
}

/// Equalization lookup table from a 256-bin histogram.
pub fn equalization_map(hist: &[usize; 256]) -> [u8; 256] {
    let n: usize = hist.iter().sum();
    let cdf_min = hist.iter().copied().find(|&c| c > 0).unwrap_or(0);
    let mut map = [0u8; 256];
    if n == cdf_min {
        return map;
    }
    let mut cdf = 0usize;
    for (v, &count) in hist.iter().enumerate() {
        cdf += count;
        let num = cdf.saturating_sub(cdf_min) as f64;
        map[v] = (num / (n - cdf_min) as f64 * 255.0).round() as u8;
    }
    map
}

/// Histogram-equalizes a single channel plane.
pub fn equalize_histogram(plane: &[u8]) -> Vec<u8> {
    let mut hist = [0usize; 256];
    for &v in plane {
        hist[v as usize] += 1;
    }
    let map = equalization_map(&hist);
    plane.iter().map(|&v| map[v as usize]).collect()
}

/// Equalizes each frame and channel of `[T, H, W, C]` frames independently.
pub fn equalize_frames(frames: &Tensor<u8>) -> Tensor<u8> {
    let (t, h, w, c) = frame_dims(frames);
    let mut out = frames.clone();
    let data = out.data_mut();
    let frame_len = h * w * c;
    for f in 0..t {
        let frame = &mut data[f * frame_len..(f + 1) * frame_len];
        for ch in 0..c {
            let mut hist = [0usize; 256];
            for px in frame.chunks(c) {
                hist[px[ch] as usize] += 1;
            }
            let map = equalization_map(&hist);
            for px in frame.chunks_mut(c) {
                px[ch] = map[px[ch] as usize];
            }
        }
    }
    out
}

/// The full chain for one video.
pub fn preprocess(video: &RawVideo, loc: &dyn FaceLocalizer, cfg: &PipelineConfig) -> Result<Vec<Clip>> {
    cfg.validate()?;
    let sized = localize_and_resize(&video.frames, loc, cfg.side)?;
    let standard = standardize_length(&sized, cfg.length)?;
    let standard = if cfg.equalize { equalize_frames(&standard) } else { standard };
    Ok(segment_clips(&standard, cfg.clip_len)?
        .iter()
        .enumerate()
        .map(|(i, block)| Clip {
            frames: normalize_pixels(block),
            parent_id: video.source_id.clone(),
            clip_index: i,
        })
        .collect())
}
