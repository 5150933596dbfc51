//! Synthetic image pairs related by a known planar warp.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::Point;
use crate::image::Image;
use crate::math::exp;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum WarpKind {
    Identity,
    UniformScale,
    Affine,
    Homography,
}

impl WarpKind {
    pub fn as_str(self) -> &'static str {
        match self {
            WarpKind::Identity => "identity",
            WarpKind::UniformScale => "uniform_scale",
            WarpKind::Affine => "affine",
            WarpKind::Homography => "homography",
        }
    }
}

/// Planar map from source to target continuous pixel coordinates, stored as a
/// 3x3 homogeneous matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthWarp {
    kind: WarpKind,
    matrix: [[f64; 3]; 3],
    inverse: [[f64; 3]; 3],
    source_size: (usize, usize),
    target_size: (usize, usize),
}

impl GroundTruthWarp {
    pub fn identity(source_size: (usize, usize), target_size: (usize, usize)) -> Self {
        let m = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        Self {
            kind: WarpKind::Identity,
            matrix: m,
            inverse: m,
            source_size,
            target_size,
        }
    }

    /// `p -> sigma * p`.
    pub fn uniform_scale(sigma: f64, source_size: (usize, usize), target_size: (usize, usize)) -> Result<Self> {
        Self::from_matrix(
            WarpKind::UniformScale,
            [[sigma, 0.0, 0.0], [0.0, sigma, 0.0], [0.0, 0.0, 1.0]],
            source_size,
            target_size,
        )
    }

    /// `[[a, b, tx], [c, d, ty]]`.
    pub fn affine(rows: [[f64; 3]; 2], source_size: (usize, usize), target_size: (usize, usize)) -> Result<Self> {
        Self::from_matrix(
            WarpKind::Affine,
            [rows[0], rows[1], [0.0, 0.0, 1.0]],
            source_size,
            target_size,
        )
    }

    pub fn homography(h: [[f64; 3]; 3], source_size: (usize, usize), target_size: (usize, usize)) -> Result<Self> {
        Self::from_matrix(WarpKind::Homography, h, source_size, target_size)
    }

    /// Validates invertibility and, for non-projective kinds, an affine last row.
    pub fn from_matrix(
        kind: WarpKind,
        matrix: [[f64; 3]; 3],
        source_size: (usize, usize),
        target_size: (usize, usize),
    ) -> Result<Self> {
        if matrix.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateWarp("matrix has non-finite entries".to_string()));
        }
        if kind != WarpKind::Homography && (matrix[2][0] != 0.0 || matrix[2][1] != 0.0 || matrix[2][2] != 1.0) {
            return Err(Error::DegenerateWarp("affine warps need last row (0, 0, 1)".to_string()));
        }
        let det = det3(&matrix);
        let scale = matrix.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
        let singular = if kind == WarpKind::Homography {
            !(det.abs() > 1e-12 * scale * scale * scale)
        } else {
            !(det.abs() > 1e-9)
        };
        if singular {
            return Err(Error::DegenerateWarp("matrix is singular".to_string()));
        }
        if source_size.0 == 0 || source_size.1 == 0 || target_size.0 == 0 || target_size.1 == 0 {
            return Err(Error::DegenerateWarp("image sizes must be positive".to_string()));
        }
        Ok(Self {
            kind,
            matrix,
            inverse: inverse3(&matrix, det),
            source_size,
            target_size,
        })
    }

    pub fn kind(&self) -> WarpKind {
        self.kind
    }

    pub fn matrix(&self) -> &[[f64; 3]; 3] {
        &self.matrix
    }

    pub fn source_size(&self) -> (usize, usize) {
        self.source_size
    }

    pub fn target_size(&self) -> (usize, usize) {
        self.target_size
    }

    /// Applies the warp; `None` on or behind the projective horizon.
    pub fn map(&self, p: Point) -> Option<Point> {
        apply(&self.matrix, p)
    }

    pub fn inverse_map(&self, p: Point) -> Option<Point> {
        apply(&self.inverse, p)
    }

    /// Jacobian of the source-to-target map at `p`, as `[[dx'/dx, dx'/dy], [dy'/dx, dy'/dy]]`.
    pub fn jacobian(&self, p: Point) -> [[f64; 2]; 2] {
        let h = &self.matrix;
        let w = h[2][0] * p.x + h[2][1] * p.y + h[2][2];
        let u = h[0][0] * p.x + h[0][1] * p.y + h[0][2];
        let v = h[1][0] * p.x + h[1][1] * p.y + h[1][2];
        let w2 = w * w;
        [
            [(h[0][0] * w - u * h[2][0]) / w2, (h[0][1] * w - u * h[2][1]) / w2],
            [(h[1][0] * w - v * h[2][0]) / w2, (h[1][1] * w - v * h[2][1]) / w2],
        ]
    }

    pub fn jacobian_det(&self, p: Point) -> f64 {
        let j = self.jacobian(p);
        j[0][0] * j[1][1] - j[0][1] * j[1][0]
    }

    /// Source point inside the source image whose image lies inside the target.
    pub fn is_covisible(&self, p: Point) -> bool {
        inside(p, self.source_size) && self.map(p).is_some_and(|q| inside(q, self.target_size))
    }

    /// Per-pixel co-visibility of the source image (pixel centers), row-major.
    pub fn valid_region(&self) -> Vec<bool> {
        let (w, h) = self.source_size;
        let mut out = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                out.push(self.is_covisible(Point::new(x as f64 + 0.5, y as f64 + 0.5)));
            }
        }
        out
    }
}

fn inside(p: Point, size: (usize, usize)) -> bool {
    p.x >= 0.0 && p.y >= 0.0 && p.x <= size.0 as f64 && p.y <= size.1 as f64
}

fn apply(m: &[[f64; 3]; 3], p: Point) -> Option<Point> {
    let w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
    if !(w > 1e-12) {
        return None;
    }
    Some(Point::new(
        (m[0][0] * p.x + m[0][1] * p.y + m[0][2]) / w,
        (m[1][0] * p.x + m[1][1] * p.y + m[1][2]) / w,
    ))
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn inverse3(m: &[[f64; 3]; 3], det: f64) -> [[f64; 3]; 3] {
    let c = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let inv = [
        [c(1, 2, 1, 2), -c(0, 2, 1, 2), c(0, 1, 1, 2)],
        [-c(1, 2, 0, 2), c(0, 2, 0, 2), -c(0, 1, 0, 2)],
        [c(1, 2, 0, 1), -c(0, 2, 0, 1), c(0, 1, 0, 1)],
    ];
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for k in 0..3 {
            out[r][k] = inv[r][k] / det;
        }
    }
    out
}

/// Exact target position of source point `p`, or `None` when it is not
/// co-visible.
pub fn ground_truth_position(warp: &GroundTruthWarp, p: Point) -> Option<Point> {
    if !warp.is_covisible(p) {
        return None;
    }
    warp.map(p)
}

#[derive(Clone, Debug)]
pub struct SynthPair {
    pub source: Image,
    pub target: Image,
    /// Target pixels whose preimage lies inside the source image.
    pub target_mask: Vec<bool>,
    pub warp: GroundTruthWarp,
    pub seed: u64,
}

/// Renders a seeded texture of `warp.source_size()` and warps it into a
/// target of `warp.target_size()` with bilinear resampling. Target pixels
/// without a preimage in the source are 0 and masked out.
pub fn generate_pair(seed: u64, warp: &GroundTruthWarp) -> Result<SynthPair> {
    let (w, h) = warp.source_size();
    let source = texture(seed, w, h)?;
    let (tw, th) = warp.target_size();
    let mut data = Vec::with_capacity(tw * th);
    let mut mask = Vec::with_capacity(tw * th);
    for y in 0..th {
        for x in 0..tw {
            let q = Point::new(x as f64 + 0.5, y as f64 + 0.5);
            match warp.inverse_map(q).and_then(|p| source.sample(p.x, p.y)) {
                Some(v) => {
                    data.push(v);
                    mask.push(true);
                }
                None => {
                    data.push(0.0);
                    mask.push(false);
                }
            }
        }
    }
    Ok(SynthPair {
        source,
        target: Image::new(tw, th, 1, data)?,
        target_mask: mask,
        warp: warp.clone(),
        seed,
    })
}

const BLOB_AREA: usize = 256;
const NOISE_SIGMA: f64 = 2.0;
const NOISE_GAIN: f64 = 6.0;
const BLOB_SIGMA_MIN: f64 = 6.0;
const BLOB_SIGMA_MAX: f64 = 32.0;

/// Band-limited random texture: one Gaussian blob (sigma 6 to 32 px) per
/// 256 px of area plus Gaussian-smoothed white noise, rescaled into
/// `[0.05, 0.95]`.
pub fn texture(seed: u64, width: usize, height: usize) -> Result<Image> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidInput("texture size must be positive".to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut field = vec![0.0; width * height];

    let blobs = (width * height / BLOB_AREA).max(1);
    for _ in 0..blobs {
        let cx = rng.random::<f64>() * width as f64;
        let cy = rng.random::<f64>() * height as f64;
        let sigma = BLOB_SIGMA_MIN + (BLOB_SIGMA_MAX - BLOB_SIGMA_MIN) * rng.random::<f64>();
        let amp = 2.0 * rng.random::<f64>() - 1.0;
        let reach = 3.0 * sigma;
        let x0 = (cx - reach).max(0.0) as usize;
        let x1 = ((cx + reach) as usize + 1).min(width);
        let y0 = (cy - reach).max(0.0) as usize;
        let y1 = ((cy + reach) as usize + 1).min(height);
        let inv = 1.0 / (2.0 * sigma * sigma);
        for y in y0..y1 {
            let dy = y as f64 + 0.5 - cy;
            for x in x0..x1 {
                let dx = x as f64 + 0.5 - cx;
                field[y * width + x] += amp * exp(-(dx * dx + dy * dy) * inv);
            }
        }
    }

    let noise: Vec<f64> = (0..width * height).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
    let smooth = gaussian_blur(&noise, width, height, NOISE_SIGMA);
    for (f, n) in field.iter_mut().zip(&smooth) {
        *f += NOISE_GAIN * n;
    }

    let lo = field.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = field.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let data = field.iter().map(|v| (0.05 + 0.9 * (v - lo) / span).clamp(0.05, 0.95)).collect();
    Image::new(width, height, 1, data)
}

/// Separable Gaussian blur with edge replication.
fn gaussian_blur(src: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma) as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|k| exp(-((k * k) as f64) / (2.0 * sigma * sigma)))
        .collect();
    let total: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / total).collect();

    let mut tmp = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let sx = (x as isize + k as isize - radius).clamp(0, width as isize - 1) as usize;
                acc += w * src[y * width + sx];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let sy = (y as isize + k as isize - radius).clamp(0, height as isize - 1) as usize;
                acc += w * tmp[sy * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}
