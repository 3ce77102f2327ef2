//! Clip-level augmentation: one rotation and one flip decision per clip,
//! then per-pixel Gaussian noise.

use gdsnet_tensor::{Float, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, VideoError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub max_rotation_deg: f64,
    pub flip_prob: f64,
    pub noise_sigma: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            max_rotation_deg: 10.0,
            flip_prob: 0.5,
            noise_sigma: 0.02,
        }
    }
}

impl AugmentConfig {
    /// No-op configuration.
    pub fn none() -> Self {
        AugmentConfig {
            max_rotation_deg: 0.0,
            flip_prob: 0.0,
            noise_sigma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_rotation_deg >= 0.0) || !(self.noise_sigma >= 0.0) {
            return Err(VideoError::Config(
                "rotation bound and noise sigma must be non-negative".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(VideoError::Config("flip_prob must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Rotates every HWC frame about its center by `deg` degrees, bilinear,
/// zero outside the frame.
pub fn rotate<T: Float>(frames: &Tensor<T>, deg: f64) -> Tensor<T> {
    let s = frames.shape();
    let (h, w, c) = (s[1], s[2], s[3]);
    let (sin, cos) = deg.to_radians().sin_cos();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let frame_len = h * w * c;
    let mut out = vec![T::zero(); frames.numel()];
    for (src, dst) in frames.data().chunks(frame_len).zip(out.chunks_mut(frame_len)) {
        let px = |y: isize, x: isize, ch: usize| -> f64 {
            if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
                0.0
            } else {
                src[(y as usize * w + x as usize) * c + ch].as_f64()
            }
        };
        for oy in 0..h {
            for ox in 0..w {
                let (dy, dx) = (oy as f64 - cy, ox as f64 - cx);
                let sy = cos * dy - sin * dx + cy;
                let sx = sin * dy + cos * dx + cx;
                let (y0, x0) = (sy.floor(), sx.floor());
                let (fy, fx) = (sy - y0, sx - x0);
                let (y0, x0) = (y0 as isize, x0 as isize);
                for ch in 0..c {
                    let v = (px(y0, x0, ch) * (1.0 - fx) + px(y0, x0 + 1, ch) * fx) * (1.0 - fy)
                        + (px(y0 + 1, x0, ch) * (1.0 - fx) + px(y0 + 1, x0 + 1, ch) * fx) * fy;
                    dst[(oy * w + ox) * c + ch] = T::from_f64(v);
                }
            }
        }
    }
    Tensor::new(s.to_vec(), out).expect("shape preserved")
}

/// Mirrors every HWC frame left to right.
pub fn flip_horizontal<T: Float>(frames: &Tensor<T>) -> Tensor<T> {
    let s = frames.shape();
    let (w, c) = (s[2], s[3]);
    let mut out = frames.clone();
    for row in out.data_mut().chunks_mut(w * c) {
        for x in 0..w / 2 {
            for ch in 0..c {
                row.swap(x * c + ch, (w - 1 - x) * c + ch);
            }
        }
    }
    out
}

/// Augments a `[F, H, W, C]` clip; the result depends only on `(clip, cfg, seed)`.
pub fn augment<T: Float>(clip: &Tensor<T>, cfg: &AugmentConfig, seed: u64) -> Result<Tensor<T>> {
    cfg.validate()?;
    if clip.rank() != 4 {
        return Err(VideoError::InvalidVideo(format!(
            "augment expects [F, H, W, C], got {:?}",
            clip.shape()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angle = if cfg.max_rotation_deg > 0.0 {
        rng.random_range(-cfg.max_rotation_deg..=cfg.max_rotation_deg)
    } else {
        0.0
    };
    let flip = rng.random::<f64>() < cfg.flip_prob;
    let mut out = if angle != 0.0 { rotate(clip, angle) } else { clip.clone() };
    if flip {
        out = flip_horizontal(&out);
    }
    if cfg.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| VideoError::Config(e.to_string()))?;
        for v in out.data_mut() {
            *v = T::from_f64((v.as_f64() + noise.sample(&mut rng)).clamp(0.0, 1.0));
        }
    } else {
        for v in out.data_mut() {
            *v = T::from_f64(v.as_f64().clamp(0.0, 1.0));
        }
    }
    Ok(out)
}
