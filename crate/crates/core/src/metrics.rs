//! Ground-truth diagnostics: the three transport losses and the matching
//! precision / coverage / endpoint-error report.

use alloc::vec;
use alloc::vec::Vec;

use crate::grid::{PatchGrid, Point};
use crate::matcher::Correspondence;
use crate::math::{floor, ln};
use crate::ot::TransportPlan;
use crate::synth::{ground_truth_position, GroundTruthWarp};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct LossConfig {
    /// Inlier/outlier distance threshold in pixels; normally the patch size.
    pub theta: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { theta: 32.0 }
    }
}

/// A correspondence paired with its ground truth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GtPair {
    /// Index into the correspondence slice.
    pub correspondence: usize,
    /// Plan row.
    pub source: usize,
    /// Target patch containing the ground-truth position.
    pub target: usize,
    pub error: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Split {
    pub inliers: Vec<GtPair>,
    pub outliers: Vec<GtPair>,
}

/// Splits co-visible correspondences by endpoint error: `error <= theta` is
/// an inlier. Correspondences whose ground truth falls outside the target
/// grid are left out.
pub fn split_inlier_outlier(
    correspondences: &[Correspondence],
    warp: &GroundTruthWarp,
    target: &PatchGrid,
    config: &LossConfig,
) -> Split {
    let mut split = Split::default();
    for (k, c) in correspondences.iter().enumerate() {
        let Some(gt) = ground_truth_position(warp, c.source_pos) else {
            continue;
        };
        let Some(j) = target.cell_containing(gt).and_then(|(r, col)| target.index_of(r, col)) else {
            continue;
        };
        let error = c.target_pos.distance(gt);
        let pair = GtPair {
            correspondence: k,
            source: c.source_index,
            target: j,
            error,
        };
        if error <= config.theta {
            split.inliers.push(pair);
        } else {
            split.outliers.push(pair);
        }
    }
    split
}

/// Mean of `-ln P[i, j]` over outlier pairs, with `P` clamped at `1e-12`.
pub fn outlier_loss(plan: &TransportPlan, outliers: &[GtPair]) -> f64 {
    if outliers.is_empty() {
        return 0.0;
    }
    let total: f64 = outliers.iter().map(|o| -ln(plan.get(o.source, o.target).max(1e-12))).sum();
    total / outliers.len() as f64
}

/// Mean squared endpoint error over inliers.
pub fn inlier_loss(correspondences: &[Correspondence], warp: &GroundTruthWarp, inliers: &[GtPair]) -> f64 {
    if inliers.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for pair in inliers {
        let c = &correspondences[pair.correspondence];
        if let Some(gt) = warp.map(c.source_pos) {
            let d = c.target_pos - gt;
            total += d.x * d.x + d.y * d.y;
        }
    }
    total / inliers.len() as f64
}

/// Mean over inliers of the mass sent to real target patches outside the
/// correspondence's box.
pub fn concentration_loss(
    plan: &TransportPlan,
    correspondences: &[Correspondence],
    target: &PatchGrid,
    inliers: &[GtPair],
) -> f64 {
    if inliers.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for pair in inliers {
        let c = &correspondences[pair.correspondence];
        for (j, &p) in plan.row(pair.source).iter().enumerate() {
            let (r, col) = target.cell_of(j);
            if !c.bbox.contains(r, col) {
                total += p;
            }
        }
    }
    total / inliers.len() as f64
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossReport {
    pub outlier: f64,
    pub inlier: f64,
    pub concentration: f64,
    pub inlier_count: usize,
    pub outlier_count: usize,
}

impl LossReport {
    /// All three losses for one level's plan and correspondences.
    pub fn compute(
        plan: &TransportPlan,
        correspondences: &[Correspondence],
        warp: &GroundTruthWarp,
        target: &PatchGrid,
        config: &LossConfig,
    ) -> Self {
        let split = split_inlier_outlier(correspondences, warp, target, config);
        Self {
            outlier: outlier_loss(plan, &split.outliers),
            inlier: inlier_loss(correspondences, warp, &split.inliers),
            concentration: concentration_loss(plan, correspondences, target, &split.inliers),
            inlier_count: split.inliers.len(),
            outlier_count: split.outliers.len(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct EvalConfig {
    /// Precision threshold in pixels.
    pub tau: f64,
    /// Coverage grid resolution per axis.
    pub coverage_grid: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            tau: 3.0,
            coverage_grid: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    /// Fraction of all matches within `tau` of the ground truth; matches
    /// without ground truth count as wrong.
    pub precision: f64,
    pub coverage: f64,
    /// Endpoint error statistics over co-visible matches.
    pub mean_epe: f64,
    pub median_epe: f64,
    pub match_count: usize,
    pub covisible_count: usize,
    pub loss_outlier: Option<f64>,
    pub loss_inlier: Option<f64>,
    pub loss_concentration: Option<f64>,
}

impl EvalReport {
    pub fn with_losses(mut self, losses: &LossReport) -> Self {
        self.loss_outlier = Some(losses.outlier);
        self.loss_inlier = Some(losses.inlier);
        self.loss_concentration = Some(losses.concentration);
        self
    }
}

/// Precision, coverage and endpoint error of a match set.
///
/// Coverage splits the bounding box of the co-visible source pixels into a
/// `G x G` grid; it is the fraction of cells with a co-visible center that
/// hold at least one match source point.
pub fn evaluate(correspondences: &[Correspondence], warp: &GroundTruthWarp, config: &EvalConfig) -> EvalReport {
    let mut report = EvalReport {
        match_count: correspondences.len(),
        ..Default::default()
    };
    if correspondences.is_empty() {
        return report;
    }
    let mut errors = Vec::with_capacity(correspondences.len());
    let mut correct = 0usize;
    for c in correspondences {
        if let Some(gt) = ground_truth_position(warp, c.source_pos) {
            let e = c.target_pos.distance(gt);
            if e <= config.tau {
                correct += 1;
            }
            errors.push(e);
        }
    }
    report.precision = correct as f64 / correspondences.len() as f64;
    report.covisible_count = errors.len();
    if !errors.is_empty() {
        report.mean_epe = errors.iter().sum::<f64>() / errors.len() as f64;
        errors.sort_by(f64::total_cmp);
        let mid = errors.len() / 2;
        report.median_epe = if errors.len() % 2 == 1 {
            errors[mid]
        } else {
            (errors[mid - 1] + errors[mid]) / 2.0
        };
    }
    report.coverage = coverage(correspondences, warp, config.coverage_grid.max(1));
    report
}

fn coverage(correspondences: &[Correspondence], warp: &GroundTruthWarp, g: usize) -> f64 {
    let (w, h) = warp.source_size();
    let valid = warp.valid_region();
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..h {
        for x in 0..w {
            if valid[y * w + x] {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x + 1);
                y1 = y1.max(y + 1);
            }
        }
    }
    if x0 == usize::MAX {
        return 0.0;
    }
    let (bw, bh) = ((x1 - x0) as f64, (y1 - y0) as f64);
    let cell_of = |p: Point| -> Option<usize> {
        let fx = floor((p.x - x0 as f64) / bw * g as f64);
        let fy = floor((p.y - y0 as f64) / bh * g as f64);
        if !(fx >= 0.0 && fy >= 0.0 && fx < g as f64 && fy < g as f64) {
            return None;
        }
        Some(fy as usize * g + fx as usize)
    };
    let mut counted = vec![false; g * g];
    let mut covisible_cells = 0usize;
    for r in 0..g {
        for c in 0..g {
            let center = Point::new(
                x0 as f64 + (c as f64 + 0.5) * bw / g as f64,
                y0 as f64 + (r as f64 + 0.5) * bh / g as f64,
            );
            if warp.is_covisible(center) {
                counted[r * g + c] = true;
                covisible_cells += 1;
            }
        }
    }
    if covisible_cells == 0 {
        return 0.0;
    }
    let mut hit = vec![false; g * g];
    for c in correspondences {
        if let Some(k) = cell_of(c.source_pos) {
            hit[k] = true;
        }
    }
    let covered = (0..g * g).filter(|&k| counted[k] && hit[k]).count();
    covered as f64 / covisible_cells as f64
}
