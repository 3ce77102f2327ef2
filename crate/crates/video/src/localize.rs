//! Face localization: one crop rectangle per frame.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VideoError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    /// Rejects empty rectangles and ones reaching outside a `height`×`width` frame.
    pub fn check(&self, frame: usize, height: usize, width: usize) -> Result<()> {
        if self.w == 0 || self.h == 0 {
            return Err(VideoError::Localization {
                frame,
                msg: format!("degenerate rectangle {self:?}"),
            });
        }
        if self.x + self.w > width || self.y + self.h > height {
            return Err(VideoError::Localization {
                frame,
                msg: format!("rectangle {self:?} exceeds {height}x{width} frame"),
            });
        }
        Ok(())
    }
}

/// Source of per-frame face rectangles.
///
/// `pixels` is the HWC u8 frame, for implementations that look at content.
pub trait FaceLocalizer {
    fn name(&self) -> &str;
    fn locate(&self, frame: usize, height: usize, width: usize, pixels: &[u8]) -> Result<Rect>;
}

/// Centered square of side `min(height, width)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CenterSquare;

impl FaceLocalizer for CenterSquare {
    fn name(&self) -> &str {
        "center-square"
    }

    fn locate(&self, _frame: usize, height: usize, width: usize, _pixels: &[u8]) -> Result<Rect> {
        let s = height.min(width);
        Ok(Rect {
            x: (width - s) / 2,
            y: (height - s) / 2,
            w: s,
            h: s,
        })
    }
}

/// Rectangles read from a JSON sidecar, one per frame.
#[derive(Debug, Clone)]
pub struct SidecarLocalizer {
    rects: Vec<Rect>,
}

impl SidecarLocalizer {
    pub fn new(rects: Vec<Rect>) -> Self {
        SidecarLocalizer { rects }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| VideoError::io(path, e))?;
        let rects = serde_json::from_str(&text).map_err(|source| VideoError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(SidecarLocalizer { rects })
    }
}

impl FaceLocalizer for SidecarLocalizer {
    fn name(&self) -> &str {
        "sidecar"
    }

    fn locate(&self, frame: usize, _height: usize, _width: usize, _pixels: &[u8]) -> Result<Rect> {
        self.rects.get(frame).copied().ok_or_else(|| VideoError::Localization {
            frame,
            msg: format!("sidecar holds only {} rectangles", self.rects.len()),
        })
    }
}
