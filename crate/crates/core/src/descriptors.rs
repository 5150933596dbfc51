//! Patch descriptors and patch areas.
//!
//! Two descriptor sources are supported: a deterministic handcrafted
//! descriptor computed from pixels, and descriptors imported from an
//! external extractor (see the `PATS-DESC` reader in the `pats` crate).

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::grid::{PatchFlags, PatchGrid, Point};
use crate::image::Image;
use crate::math::{atan2, floor, hypot, round, sqrt};
use crate::synth::GroundTruthWarp;

/// Length of the handcrafted descriptor: 16 intensity bins, 8 orientation
/// bins, 4x4 thumbnail.
pub const HANDCRAFTED_DIM: usize = 40;
const INTENSITY_BINS: usize = 16;
const ORIENTATION_BINS: usize = 8;
const THUMB: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct HandcraftedParams {
    /// Smallest pixel support; patches smaller than this are described from a
    /// centered `min_support`-wide square that includes surrounding context.
    pub min_support: usize,
}

impl Default for HandcraftedParams {
    fn default() -> Self {
        Self { min_support: 8 }
    }
}

/// Per-patch data imported from an external extractor.
#[derive(Clone, Debug, PartialEq)]
pub struct ImportedPatches {
    pub patch_size: usize,
    pub dim: usize,
    pub positions: Vec<Point>,
    pub areas: Vec<f64>,
    /// Row-major `positions.len() x dim`.
    pub descriptors: Vec<f64>,
}

impl ImportedPatches {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    fn check_against(&self, grid: &PatchGrid) -> Result<()> {
        if self.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                what: "imported patch count",
                expected: grid.len(),
                actual: self.len(),
            });
        }
        if self.patch_size != grid.patch_size() {
            return Err(Error::DimensionMismatch {
                what: "imported patch size",
                expected: grid.patch_size(),
                actual: self.patch_size,
            });
        }
        if self.descriptors.len() != self.len() * self.dim || self.areas.len() != self.len() {
            return Err(invalid("imported descriptor table is inconsistent"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DescriptorBackend {
    Handcrafted(HandcraftedParams),
    File(ImportedPatches),
}

impl Default for DescriptorBackend {
    fn default() -> Self {
        DescriptorBackend::Handcrafted(HandcraftedParams::default())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum AreaBackend {
    /// Every patch gets area 1.
    Unit,
    /// Area from the Jacobian of a known warp; singular points get `max_area`.
    GroundTruth { warp: GroundTruthWarp, max_area: f64 },
    File(ImportedPatches),
}

/// Fills the descriptors of `grid` from `image` (positions are in `image`
/// pixel coordinates).
pub fn describe_patches(image: &Image, grid: &PatchGrid, backend: &DescriptorBackend) -> Result<PatchGrid> {
    describe_in_frame(image, grid, backend, Point::new(0.0, 0.0), 1.0)
}

/// Like [`describe_patches`], but grid positions live in another frame:
/// the image pixel coordinate of position `p` is `(p - origin) / scale`, and
/// each patch spans `patch_size` image pixels.
pub fn describe_in_frame(
    image: &Image,
    grid: &PatchGrid,
    backend: &DescriptorBackend,
    origin: Point,
    scale: f64,
) -> Result<PatchGrid> {
    match backend {
        DescriptorBackend::Handcrafted(params) => {
            let mut data = Vec::with_capacity(grid.len() * HANDCRAFTED_DIM);
            let s = grid.patch_size();
            for &p in grid.positions() {
                let local = Point::new((p.x - origin.x) / scale, (p.y - origin.y) / scale);
                data.extend_from_slice(&handcrafted(image, local, s, params));
            }
            grid.clone().with_descriptors(HANDCRAFTED_DIM, data)
        }
        DescriptorBackend::File(imported) => {
            imported.check_against(grid)?;
            let mut data = imported.descriptors.clone();
            for row in data.chunks_exact_mut(imported.dim.max(1)) {
                normalize(row);
            }
            grid.clone().with_descriptors(imported.dim, data)
        }
    }
}

/// Assigns target patch areas.
pub fn estimate_areas(grid: &PatchGrid, backend: &AreaBackend) -> Result<PatchGrid> {
    match backend {
        AreaBackend::Unit => grid.clone().with_areas(vec![1.0; grid.len()]),
        AreaBackend::GroundTruth { warp, max_area } => {
            let mut areas = Vec::with_capacity(grid.len());
            let mut flags = grid.flags().to_vec();
            for (i, &p) in grid.positions().iter().enumerate() {
                // A target patch holds 1/|det J| source units, J taken at the
                // source preimage of its center.
                let det = warp.inverse_map(p).map(|src| warp.jacobian_det(src)).map(f64::abs);
                match det {
                    Some(d) if d >= 1e-12 && (1.0 / d).is_finite() => areas.push((1.0 / d).min(*max_area)),
                    _ => {
                        areas.push(*max_area);
                        flags[i].insert(PatchFlags::AREA_CLAMPED);
                    }
                }
            }
            grid.clone().with_areas(areas)?.with_flags(flags)
        }
        AreaBackend::File(imported) => {
            imported.check_against(grid)?;
            grid.clone().with_areas(imported.areas.clone())
        }
    }
}

/// Handcrafted descriptor of the patch of side `patch_size` centered at
/// `center` (image pixel coordinates).
pub fn handcrafted(image: &Image, center: Point, patch_size: usize, params: &HandcraftedParams) -> [f64; HANDCRAFTED_DIM] {
    let support = patch_size.max(params.min_support).max(1);
    let x0 = round(center.x - support as f64 / 2.0) as isize;
    let y0 = round(center.y - support as f64 / 2.0) as isize;
    let mut px = vec![0.0; support * support];
    for y in 0..support {
        for x in 0..support {
            px[y * support + x] = image.luma_clamped(x0 + x as isize, y0 + y as isize);
        }
    }
    let at = |x: isize, y: isize| {
        let cx = x.clamp(0, support as isize - 1) as usize;
        let cy = y.clamp(0, support as isize - 1) as usize;
        px[cy * support + cx]
    };

    let mut out = [0.0; HANDCRAFTED_DIM];
    let (intensity, rest) = out.split_at_mut(INTENSITY_BINS);
    let (orientation, thumb) = rest.split_at_mut(ORIENTATION_BINS);

    for &v in &px {
        soft_bin(intensity, v * INTENSITY_BINS as f64 - 0.5, false, 1.0);
    }

    for y in 0..support as isize {
        for x in 0..support as isize {
            let gx = 0.5 * (at(x + 1, y) - at(x - 1, y));
            let gy = 0.5 * (at(x, y + 1) - at(x, y - 1));
            let mag = hypot(gx, gy);
            if mag > 0.0 {
                let t = (atan2(gy, gx) + PI) / (2.0 * PI) * ORIENTATION_BINS as f64 - 0.5;
                soft_bin(orientation, t, true, mag);
            }
        }
    }

    if support >= THUMB {
        let mut counts = [0usize; THUMB * THUMB];
        for y in 0..support {
            for x in 0..support {
                let cell = (y * THUMB / support) * THUMB + x * THUMB / support;
                thumb[cell] += px[y * support + x];
                counts[cell] += 1;
            }
        }
        for (t, c) in thumb.iter_mut().zip(counts) {
            *t /= c as f64;
        }
    } else {
        let step = support as f64 / THUMB as f64;
        for (k, t) in thumb.iter_mut().enumerate() {
            let (cy, cx) = ((k / THUMB) as f64, (k % THUMB) as f64);
            *t = image.sample_clamped(x0 as f64 + (cx + 0.5) * step, y0 as f64 + (cy + 0.5) * step);
        }
    }

    center_and_normalize(intensity);
    center_and_normalize(orientation);
    center_and_normalize(thumb);
    normalize(&mut out);
    out
}

/// Linear vote of `weight` at fractional bin position `t`.
fn soft_bin(bins: &mut [f64], t: f64, circular: bool, weight: f64) {
    let n = bins.len() as isize;
    let lo = floor(t);
    let frac = t - lo;
    let lo = lo as isize;
    let mut vote = |b: isize, w: f64| {
        let idx = if circular { b.rem_euclid(n) } else { b.clamp(0, n - 1) };
        bins[idx as usize] += w;
    };
    vote(lo, weight * (1.0 - frac));
    vote(lo + 1, weight * frac);
}

fn center_and_normalize(block: &mut [f64]) {
    let mean = block.iter().sum::<f64>() / block.len() as f64;
    block.iter_mut().for_each(|v| *v -= mean);
    normalize(block);
}

/// Scales to unit L2 norm; near-zero vectors become exactly zero.
fn normalize(v: &mut [f64]) {
    let norm = sqrt(v.iter().map(|x| x * x).sum::<f64>());
    if norm < 1e-12 {
        v.iter_mut().for_each(|x| *x = 0.0);
    } else {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}
