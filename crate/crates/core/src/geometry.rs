//! Boxes and search-region geometry.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in centre convention, frame pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        let b = Self { cx, cy, w, h };
        b.validate()?;
        Ok(b)
    }

    /// From the `x,y,w,h` top-left convention used by ground-truth files.
    pub fn from_top_left(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(x + w / 2.0, y + h / 2.0, w, h)
    }

    pub fn to_top_left(&self) -> [f64; 4] {
        [self.cx - self.w / 2.0, self.cy - self.h / 2.0, self.w, self.h]
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.cx, self.cy, self.w, self.h].iter().all(|v| v.is_finite());
        if !finite || self.w <= 0.0 || self.h <= 0.0 {
            return Err(Error::invalid(format!("degenerate box {self:?}")));
        }
        Ok(())
    }

    pub fn left(&self) -> f64 {
        self.cx - self.w / 2.0
    }

    pub fn right(&self) -> f64 {
        self.cx + self.w / 2.0
    }

    pub fn top(&self) -> f64 {
        self.cy - self.h / 2.0
    }

    pub fn bottom(&self) -> f64 {
        self.cy + self.h / 2.0
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn intersects_frame(&self, frame_h: usize, frame_w: usize) -> bool {
        self.right() > 0.0 && self.bottom() > 0.0 && self.left() < frame_w as f64 && self.top() < frame_h as f64
    }

    /// Keeps the centre inside the frame and the size within `[min_size, frame]`.
    pub fn clamped_to_frame(&self, frame_h: usize, frame_w: usize, min_size: f64) -> BBox {
        let (fw, fh) = (frame_w as f64, frame_h as f64);
        BBox {
            cx: self.cx.clamp(0.0, fw),
            cy: self.cy.clamp(0.0, fh),
            w: self.w.clamp(min_size.min(fw), fw),
            h: self.h.clamp(min_size.min(fh), fh),
        }
    }
}

/// Where a search patch came from: the quantities behind the pyramid-depth rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchGeometry {
    /// Side of the square patch fed to the tracker (pixels).
    pub search_size: usize,
    /// Crop extent in frame pixels, limited to the frame.
    pub patch_h: f64,
    pub patch_w: f64,
    pub frame_h: usize,
    pub frame_w: usize,
    /// Frame pixels per search-patch pixel (unclamped crop side / `search_size`).
    pub scale: f64,
}

impl SearchGeometry {
    pub fn new(search_size: usize, patch_h: f64, patch_w: f64, frame_h: usize, frame_w: usize) -> Result<Self> {
        let g = Self {
            search_size,
            patch_h,
            patch_w,
            frame_h,
            frame_w,
            scale: patch_w / search_size.max(1) as f64,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_h == 0 || self.frame_w == 0 {
            return Err(Error::invalid("zero-area frame"));
        }
        if self.search_size == 0 {
            return Err(Error::invalid("zero search size"));
        }
        let ok_h = self.patch_h > 0.0 && self.patch_h <= self.frame_h as f64;
        let ok_w = self.patch_w > 0.0 && self.patch_w <= self.frame_w as f64;
        if !(ok_h && ok_w) || !self.scale.is_finite() || self.scale <= 0.0 {
            return Err(Error::invalid(format!("search patch does not fit the frame: {self:?}")));
        }
        Ok(())
    }

    /// Fraction of the frame covered by the search region, in `(0, 1]`.
    pub fn area_fraction(&self) -> f64 {
        (self.patch_h * self.patch_w) / (self.frame_h as f64 * self.frame_w as f64)
    }
}
