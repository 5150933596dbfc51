//! Row-major floating-point raster.
//!
//! Continuous coordinates put the origin at the top-left corner of the
//! top-left pixel; pixel `(x, y)` covers `[x, x+1) x [y, y+1)` and has its
//! center at `(x + 0.5, y + 0.5)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::math::floor;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    /// Validates dimensions, channel count and that every sample is a finite
    /// value in `[0, 1]`.
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid("image has zero width or height"));
        }
        if channels != 1 && channels != 3 {
            return Err(invalid("image must have 1 or 3 channels"));
        }
        if data.len() != width * height * channels {
            return Err(invalid("sample count does not match width x height x channels"));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(invalid("samples must be finite and within [0, 1]"));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Single-channel image filled with `value` (clamped into `[0, 1]`).
    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, 1, vec![value.clamp(0.0, 1.0); width * height])
    }

    /// Single-channel image from a per-pixel function; outputs are clamped.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self::new(width, height, 1, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, channel: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + channel]
    }

    /// Gray value (channel mean) of pixel `(x, y)`.
    #[inline]
    pub fn luma(&self, x: usize, y: usize) -> f64 {
        let base = (y * self.width + x) * self.channels;
        if self.channels == 1 {
            self.data[base]
        } else {
            (self.data[base] + self.data[base + 1] + self.data[base + 2]) / 3.0
        }
    }

    /// Gray value with coordinates clamped to the image.
    #[inline]
    pub fn luma_clamped(&self, x: isize, y: isize) -> f64 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.luma(cx, cy)
    }

    pub fn to_gray(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let data = (0..self.width * self.height)
            .map(|i| {
                let b = i * 3;
                (self.data[b] + self.data[b + 1] + self.data[b + 2]) / 3.0
            })
            .collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    /// Bilinear gray sample at continuous coordinates, replicating edge
    /// pixels outside the image.
    pub fn sample_clamped(&self, x: f64, y: f64) -> f64 {
        let px = x - 0.5;
        let py = y - 0.5;
        let x0 = floor(px);
        let y0 = floor(py);
        let tx = px - x0;
        let ty = py - y0;
        let x0 = x0 as isize;
        let y0 = y0 as isize;
        let a = self.luma_clamped(x0, y0);
        let b = self.luma_clamped(x0 + 1, y0);
        let c = self.luma_clamped(x0, y0 + 1);
        let d = self.luma_clamped(x0 + 1, y0 + 1);
        let top = a + (b - a) * tx;
        let bottom = c + (d - c) * tx;
        top + (bottom - top) * ty
    }

    /// Bilinear gray sample, or `None` when the point lies outside
    /// `[0, width] x [0, height]`.
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        if !(x >= 0.0 && y >= 0.0 && x <= self.width as f64 && y <= self.height as f64) {
            return None;
        }
        Some(self.sample_clamped(x, y))
    }

    /// Zero-pads at the right and bottom so both sides are multiples of
    /// `multiple`. Returns the image unchanged when already aligned.
    pub fn pad_to_multiple(&self, multiple: usize) -> Image {
        assert!(multiple > 0);
        let w = self.width.div_ceil(multiple) * multiple;
        let h = self.height.div_ceil(multiple) * multiple;
        if w == self.width && h == self.height {
            return self.clone();
        }
        let mut data = vec![0.0; w * h * self.channels];
        for y in 0..self.height {
            let src = y * self.width * self.channels;
            let dst = y * w * self.channels;
            let len = self.width * self.channels;
            data[dst..dst + len].copy_from_slice(&self.data[src..src + len]);
        }
        Image {
            width: w,
            height: h,
            channels: self.channels,
            data,
        }
    }

    /// Gray crop of `side x side` pixels whose top-left pixel is `(x0, y0)`;
    /// pixels outside the image replicate the nearest edge.
    pub fn crop_gray(&self, x0: isize, y0: isize, side: usize) -> Image {
        let mut data = Vec::with_capacity(side * side);
        for y in 0..side as isize {
            for x in 0..side as isize {
                data.push(self.luma_clamped(x0 + x, y0 + y));
            }
        }
        Image {
            width: side,
            height: side,
            channels: 1,
            data,
        }
    }

    /// Square gray image of `side` pixels where pixel `(u, v)` is the bilinear
    /// sample at `origin + scale * (u + 0.5, v + 0.5)`.
    pub fn resample_gray(&self, origin: (f64, f64), scale: f64, side: usize) -> Image {
        let mut data = Vec::with_capacity(side * side);
        for v in 0..side {
            for u in 0..side {
                let x = origin.0 + scale * (u as f64 + 0.5);
                let y = origin.1 + scale * (v as f64 + 0.5);
                data.push(self.sample_clamped(x, y));
            }
        }
        Image {
            width: side,
            height: side,
            channels: 1,
            data,
        }
    }

    /// True when every gray sample inside the pixel rectangle is identical.
    pub fn is_constant_region(&self, x0: usize, y0: usize, w: usize, h: usize) -> bool {
        let x1 = (x0 + w).min(self.width);
        let y1 = (y0 + h).min(self.height);
        if x0 >= x1 || y0 >= y1 {
            return true;
        }
        let first = self.luma(x0, y0);
        (y0..y1).all(|y| (x0..x1).all(|x| self.luma(x, y) == first))
    }
}
