//! Coarse-to-fine refinement.
//!
//! Every matched patch at level `l` opens a window pair: a source window of
//! side `e = n * s` around the patch and a target window of side `gamma * e`
//! around its match, resampled to `e x e`. Both windows are cut into
//! `next_s`-sized sub-patches and matched on their own. Source windows
//! overlap, so a next-level cell can be claimed by several windows; trimming
//! keeps the claim that transported the most area.

use alloc::vec;
use alloc::vec::Vec;

use crate::descriptors::{
    describe_in_frame, describe_patches, estimate_areas, AreaBackend, DescriptorBackend, HandcraftedParams,
};
use crate::error::{invalid, Result};
use crate::grid::{build_patch_grid, BBox, PatchFlags, PatchGrid, Point};
use crate::image::Image;
use crate::matcher::{match_grids, Correspondence, CorrespondenceSet, GridMatching, MatcherConfig, Warning};
use crate::math::{floor, round, sqrt};
use crate::ot::{SinkhornConfig, TransportPlan};

/// Mass-weighted mean area of the target patches in `bbox`.
/// `None` when the box received no mass.
pub fn area_expectation(plan: &TransportPlan, i: usize, bbox: &BBox, target: &PatchGrid) -> Option<f64> {
    let mut mass = 0.0;
    let mut weighted = 0.0;
    for (r, c) in bbox.cells() {
        let j = target.index_of(r, c)?;
        let p = plan.get(i, j);
        mass += p;
        weighted += p * target.area(j);
    }
    (mass > 0.0).then(|| weighted / mass)
}

/// `sqrt(a) / sqrt(a_hat)`; `None` unless both areas are positive.
pub fn scale_factor(source_area: f64, expected_area: f64) -> Option<f64> {
    if !(source_area > 0.0 && expected_area > 0.0) {
        return None;
    }
    let g = sqrt(source_area) / sqrt(expected_area);
    g.is_finite().then_some(g)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LevelSpec {
    pub patch_size: usize,
    /// Window expansion factor; `None` on the finest level.
    pub expansion: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HierarchyConfig {
    pub levels: Vec<LevelSpec>,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        Self {
            levels: vec![
                LevelSpec { patch_size: 32, expansion: Some(3) },
                LevelSpec { patch_size: 8, expansion: Some(2) },
                LevelSpec { patch_size: 2, expansion: None },
            ],
        }
    }
}

impl HierarchyConfig {
    pub fn validate(&self) -> Result<()> {
        let Some(last) = self.levels.last() else {
            return Err(invalid("hierarchy needs at least one level"));
        };
        if last.expansion.is_some() {
            return Err(invalid("the finest level takes no expansion factor"));
        }
        for w in self.levels.windows(2) {
            let (cur, next) = (w[0], w[1]);
            let Some(n) = cur.expansion.filter(|&n| n >= 1) else {
                return Err(invalid("every level but the finest needs an expansion factor >= 1"));
            };
            if next.patch_size == 0 || next.patch_size >= cur.patch_size {
                return Err(invalid("patch sizes must be strictly decreasing"));
            }
            if (n * cur.patch_size) % next.patch_size != 0 {
                return Err(invalid("each patch size must divide the previous window size"));
            }
        }
        if self.levels[0].patch_size == 0 {
            return Err(invalid("patch size must be positive"));
        }
        Ok(())
    }

    pub fn coarsest_patch_size(&self) -> usize {
        self.levels.first().map_or(1, |l| l.patch_size)
    }
}

/// Configuration of one full hierarchical run.
#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct PipelineConfig {
    pub hierarchy: HierarchyConfig,
    pub sinkhorn: SinkhornConfig,
    pub matcher: MatcherConfig,
    /// Descriptor parameters for the finer levels (and level 1 when the
    /// handcrafted backend is used there).
    pub descriptor: HandcraftedParams,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.hierarchy.validate()?;
        self.sinkhorn.validate()?;
        self.matcher.validate()
    }
}

/// Window layout for one level transition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowGeometry {
    pub patch_size: usize,
    pub expansion: usize,
    pub next_patch_size: usize,
    /// Context pixels kept around each window so small sub-patches can be
    /// described from a wider support.
    pub margin: usize,
}

impl WindowGeometry {
    pub fn new(patch_size: usize, expansion: usize, next_patch_size: usize, params: &HandcraftedParams) -> Self {
        let support = next_patch_size.max(params.min_support);
        Self {
            patch_size,
            expansion,
            next_patch_size,
            margin: (support - next_patch_size) / 2 + 1,
        }
    }

    pub fn side(&self) -> usize {
        self.expansion * self.patch_size
    }
}

/// A matched window pair at one level.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowPair {
    /// Index of the correspondence that opened the window.
    pub owner: usize,
    /// Top-left source pixel of the window (multiple of the next patch size).
    pub source_origin: (isize, isize),
    pub side: usize,
    /// Top-left corner of the target window in target coordinates.
    pub target_origin: Point,
    /// Target pixels per window pixel (the correspondence's gamma).
    pub scale: f64,
    /// The target window was shifted or centered to fit the target image.
    pub partial: bool,
    pub margin: usize,
    /// Source crop of side `side + 2 * margin`.
    pub source_window: Image,
    /// Target window resampled to side `side + 2 * margin`.
    pub resized_target: Image,
    /// Unpadded target extent.
    pub target_extent: (usize, usize),
    /// Unpadded source extent.
    pub source_extent: (usize, usize),
}

impl WindowPair {
    pub fn target_side(&self) -> f64 {
        self.scale * self.side as f64
    }

    /// Target-image coordinates of a point given in window pixels.
    pub fn to_target(&self, u: Point) -> Point {
        self.target_origin + u * self.scale
    }
}

/// Places the source window around `corr.source_pos` (snapped to the next
/// lattice) and the target window around `corr.target_pos`, shifted by the
/// same amount the snap moved the source window, then resamples the target.
/// `None` when the correspondence carries no usable scale or position.
pub fn crop_and_resize(
    source: &Image,
    target: &Image,
    source_extent: (usize, usize),
    target_extent: (usize, usize),
    corr: &Correspondence,
    owner: usize,
    geometry: &WindowGeometry,
) -> Option<WindowPair> {
    let gamma = corr.scale;
    if !(gamma > 0.0 && gamma.is_finite()) || !corr.target_pos.is_finite() || !corr.source_pos.is_finite() {
        return None;
    }
    let e = geometry.side();
    let snap = geometry.next_patch_size as f64;
    let place = |p: f64, limit: usize| -> isize {
        let o = round((p - e as f64 / 2.0) / snap) * snap;
        let max = limit as f64 - e as f64;
        let o = if max >= 0.0 { o.clamp(0.0, max) } else { 0.0 };
        o as isize
    };
    let (sw, sh) = (source.width(), source.height());
    let source_origin = (place(corr.source_pos.x, sw), place(corr.source_pos.y, sh));
    let half = e as f64 / 2.0;
    let shift = Point::new(
        source_origin.0 as f64 + half - corr.source_pos.x,
        source_origin.1 as f64 + half - corr.source_pos.y,
    );

    let te = gamma * e as f64;
    let center = corr.target_pos + shift * gamma;
    let mut partial = false;
    let mut fit = |c: f64, limit: usize| -> f64 {
        let o = c - te / 2.0;
        let max = limit as f64 - te;
        let fitted = if max >= 0.0 { o.clamp(0.0, max) } else { max / 2.0 };
        if fitted != o {
            partial = true;
        }
        fitted
    };
    let target_origin = Point::new(fit(center.x, target_extent.0), fit(center.y, target_extent.1));
    if !target_origin.is_finite() {
        return None;
    }

    let m = geometry.margin;
    let full = e + 2 * m;
    let source_window = source.crop_gray(source_origin.0 - m as isize, source_origin.1 - m as isize, full);
    let resized_target = target.resample_gray(
        (target_origin.x - gamma * m as f64, target_origin.y - gamma * m as f64),
        gamma,
        full,
    );
    Some(WindowPair {
        owner,
        source_origin,
        side: e,
        target_origin,
        scale: gamma,
        partial,
        margin: m,
        source_window,
        resized_target,
        target_extent,
        source_extent,
    })
}

/// Cuts both windows of `pair` into `next_patch_size` sub-patches.
///
/// The source sub-grid is a sparse subset of the global next-level lattice
/// of a `source_size` image (sub-patches outside the image are skipped); the
/// target sub-grid is a dense `K x K` grid whose positions are in target
/// image coordinates. Areas are 1. Sub-patches that are constant or reach
/// outside the unpadded image are flagged.
pub fn subdivide(
    pair: &WindowPair,
    source_size: (usize, usize),
    next_patch_size: usize,
    level: usize,
) -> Result<(PatchGrid, PatchGrid)> {
    let s = next_patch_size;
    if s == 0 || pair.side % s != 0 {
        return Err(invalid("next patch size must divide the window side"));
    }
    let k = pair.side / s;
    let (rows, cols) = (source_size.1 / s, source_size.0 / s);
    let m = pair.margin;

    let mut cells = Vec::with_capacity(k * k);
    let mut positions = Vec::with_capacity(k * k);
    let mut flags = Vec::with_capacity(k * k);
    for r in 0..k {
        for c in 0..k {
            let x0 = pair.source_origin.0 + (c * s) as isize;
            let y0 = pair.source_origin.1 + (r * s) as isize;
            if x0 < 0 || y0 < 0 {
                continue;
            }
            let (gc, gr) = (x0 as usize / s, y0 as usize / s);
            if gr >= rows || gc >= cols {
                continue;
            }
            cells.push(gr * cols + gc);
            positions.push(Point::new((gc as f64 + 0.5) * s as f64, (gr as f64 + 0.5) * s as f64));
            let mut f = PatchFlags::empty();
            if pair.source_window.is_constant_region(m + c * s, m + r * s, s, s) {
                f.insert(PatchFlags::FLAT);
            }
            flags.push(f);
        }
    }
    let source_grid = PatchGrid::sparse(s, rows, cols, level, cells, positions)?
        .with_flags(flags)?
        .flag_padding(pair.source_extent.0, pair.source_extent.1);

    let mut target_grid = PatchGrid::dense(s, k, k, level, pair.target_origin, pair.scale);
    let (tw, th) = (pair.target_extent.0 as f64, pair.target_extent.1 as f64);
    let mut tflags = Vec::with_capacity(k * k);
    for (idx, p) in target_grid.positions().iter().enumerate() {
        let (r, c) = (idx / k, idx % k);
        let mut f = PatchFlags::empty();
        if pair.resized_target.is_constant_region(m + c * s, m + r * s, s, s) {
            f.insert(PatchFlags::FLAT);
        }
        if !(p.x >= 0.0 && p.y >= 0.0 && p.x < tw && p.y < th) {
            f.insert(PatchFlags::PADDED);
        }
        tflags.push(f);
    }
    target_grid = target_grid.with_flags(tflags)?;
    Ok((source_grid, target_grid))
}

/// A next-level source sub-patch claiming the lattice cell under `center`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubpatchCandidate {
    pub center: Point,
    /// Window the candidate came from.
    pub owner: usize,
    /// Index inside its window.
    pub local: usize,
    /// Area transported into the candidate's target box.
    pub score: f64,
}

/// Surviving candidates, one per claimed cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Trimmed {
    /// Sparse grid of the survivors, ordered by cell.
    pub grid: PatchGrid,
    /// Index into the candidate slice for each grid patch.
    pub survivors: Vec<usize>,
}

/// Keeps, for every cell of the `rows x cols` lattice of side `patch_size`,
/// the candidate with the largest score. Ties go to the smaller owner, then
/// the smaller local index. Candidates outside the lattice are ignored.
pub fn trim_subpatches(
    candidates: &[SubpatchCandidate],
    rows: usize,
    cols: usize,
    patch_size: usize,
    level: usize,
) -> Result<Trimmed> {
    if patch_size == 0 {
        return Err(invalid("patch size must be positive"));
    }
    let s = patch_size as f64;
    let mut best: Vec<Option<usize>> = vec![None; rows * cols];
    for (idx, cand) in candidates.iter().enumerate() {
        let (fx, fy) = (floor(cand.center.x / s), floor(cand.center.y / s));
        if !(fx >= 0.0 && fy >= 0.0) {
            continue;
        }
        let (c, r) = (fx as usize, fy as usize);
        if r >= rows || c >= cols {
            continue;
        }
        let slot = &mut best[r * cols + c];
        let wins = match *slot {
            None => true,
            Some(cur) => {
                let other = &candidates[cur];
                cand.score > other.score
                    || (cand.score == other.score && (cand.owner, cand.local) < (other.owner, other.local))
            }
        };
        if wins {
            *slot = Some(idx);
        }
    }
    let mut cells = Vec::new();
    let mut positions = Vec::new();
    let mut survivors = Vec::new();
    for (cell, slot) in best.iter().enumerate() {
        if let Some(idx) = *slot {
            cells.push(cell);
            let (r, c) = (cell / cols, cell % cols);
            positions.push(Point::new((c as f64 + 0.5) * s, (r as f64 + 0.5) * s));
            survivors.push(idx);
        }
    }
    let grid = PatchGrid::sparse(patch_size, rows, cols, level, cells, positions)?;
    Ok(Trimmed { grid, survivors })
}

/// Runs independent window jobs. Implementations may run them in any order
/// or in parallel but must return results in job order.
pub trait WindowExecutor: Sync {
    fn execute<R, F>(&self, jobs: usize, job: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync;
}

/// Runs window jobs one after another on the calling thread.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sequential;

impl WindowExecutor for Sequential {
    fn execute<R, F>(&self, jobs: usize, job: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync,
    {
        (0..jobs).map(job).collect()
    }
}

/// Images and level-1 backends for a hierarchical run.
#[derive(Clone, Debug)]
pub struct HierarchyInput<'a> {
    /// Source image, padded to a multiple of the coarsest patch size.
    pub source: &'a Image,
    /// Target image, padded likewise.
    pub target: &'a Image,
    /// Unpadded sizes.
    pub source_extent: (usize, usize),
    pub target_extent: (usize, usize),
    pub source_descriptors: DescriptorBackend,
    pub target_descriptors: DescriptorBackend,
    /// Level-1 target areas; finer levels use unit areas.
    pub target_areas: AreaBackend,
}

impl<'a> HierarchyInput<'a> {
    /// Handcrafted descriptors, unit areas, no padding.
    pub fn new(source: &'a Image, target: &'a Image) -> Self {
        Self {
            source,
            target,
            source_extent: (source.width(), source.height()),
            target_extent: (target.width(), target.height()),
            source_descriptors: DescriptorBackend::default(),
            target_descriptors: DescriptorBackend::default(),
            target_areas: AreaBackend::Unit,
        }
    }

    pub fn with_target_areas(mut self, areas: AreaBackend) -> Self {
        self.target_areas = areas;
        self
    }
}

/// Summary of one level.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LevelResult {
    pub level: usize,
    pub patch_size: usize,
    /// Transport problems solved.
    pub windows: usize,
    pub dropped_windows: usize,
    pub partial_windows: usize,
    /// Matched sub-patches before trimming.
    pub candidates: usize,
    pub correspondences: usize,
    pub max_marginal_error: f64,
    pub non_converged: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HierarchyOutput {
    /// Level-1 grids and plan.
    pub coarse: GridMatching,
    pub coarse_source: PatchGrid,
    pub coarse_target: PatchGrid,
    pub levels: Vec<LevelResult>,
    /// Finest-level correspondences, ordered by source cell.
    pub correspondences: CorrespondenceSet,
}

/// Sequential [`run_hierarchy_with`].
pub fn run_hierarchy(input: &HierarchyInput<'_>, config: &PipelineConfig) -> Result<HierarchyOutput> {
    run_hierarchy_with(input, config, &Sequential)
}

struct WindowOutcome {
    candidates: Vec<(SubpatchCandidate, Correspondence)>,
    partial: bool,
    marginal_error: f64,
    converged: bool,
    solved: bool,
}

/// Full coarse-to-fine matching. Window jobs go through `executor`; the
/// result does not depend on how it schedules them.
pub fn run_hierarchy_with<E: WindowExecutor>(
    input: &HierarchyInput<'_>,
    config: &PipelineConfig,
    executor: &E,
) -> Result<HierarchyOutput> {
    config.validate()?;
    let levels = &config.hierarchy.levels;
    let s1 = levels[0].patch_size;

    let source_grid = build_patch_grid(input.source, s1)?.flag_padding(input.source_extent.0, input.source_extent.1);
    let target_grid = build_patch_grid(input.target, s1)?.flag_padding(input.target_extent.0, input.target_extent.1);
    let source_grid = describe_patches(input.source, &source_grid, &input.source_descriptors)?;
    let target_grid = describe_patches(input.target, &target_grid, &input.target_descriptors)?;
    let target_grid = estimate_areas(&target_grid, &input.target_areas)?;
    let coarse = match_grids(&source_grid, &target_grid, &config.sinkhorn, &config.matcher)?;

    let mut summaries = vec![LevelResult {
        level: 1,
        patch_size: s1,
        windows: usize::from(coarse.plan.is_some()),
        candidates: coarse.set.len(),
        correspondences: coarse.set.len(),
        max_marginal_error: coarse.plan.as_ref().map_or(0.0, TransportPlan::marginal_error),
        non_converged: usize::from(coarse.plan.as_ref().is_some_and(|p| !p.converged())),
        ..Default::default()
    }];
    let mut current = coarse.set.clone();
    if current.is_empty() {
        current.warnings.push(Warning::NoCoarseMatches);
    }

    let source_size = (input.source.width(), input.source.height());
    for l in 0..levels.len() - 1 {
        if current.is_empty() {
            break;
        }
        let spec = levels[l];
        let next = levels[l + 1].patch_size;
        let geometry = WindowGeometry::new(spec.patch_size, spec.expansion.unwrap_or(1), next, &config.descriptor);
        let level = l + 2;
        let backend = DescriptorBackend::Handcrafted(config.descriptor);

        let windows = &current.matches;
        let results: Vec<Result<Option<WindowOutcome>>> = executor.execute(windows.len(), |w| {
            let parent = &windows[w];
            let Some(pair) = crop_and_resize(
                input.source,
                input.target,
                input.source_extent,
                input.target_extent,
                parent,
                w,
                &geometry,
            ) else {
                return Ok(None);
            };
            let (sg, tg) = subdivide(&pair, source_size, next, level)?;
            let m = pair.margin as f64;
            let sg = describe_in_frame(
                &pair.source_window,
                &sg,
                &backend,
                Point::new(pair.source_origin.0 as f64 - m, pair.source_origin.1 as f64 - m),
                1.0,
            )?;
            let tg = describe_in_frame(
                &pair.resized_target,
                &tg,
                &backend,
                pair.target_origin - Point::new(m, m) * pair.scale,
                pair.scale,
            )?;
            let matching = match_grids(&sg, &tg, &config.sinkhorn, &config.matcher)?;
            let mut candidates = Vec::with_capacity(matching.set.len());
            for c in &matching.set.matches {
                let local = c.source_index;
                let cand = SubpatchCandidate {
                    center: c.source_pos,
                    owner: w,
                    local,
                    score: matching.transported[local],
                };
                let refined = Correspondence {
                    source_index: sg.cells()[local],
                    scale: parent.scale * c.scale,
                    root: parent.root,
                    ..*c
                };
                candidates.push((cand, refined));
            }
            Ok(Some(WindowOutcome {
                candidates,
                partial: pair.partial,
                marginal_error: matching.plan.as_ref().map_or(0.0, TransportPlan::marginal_error),
                converged: matching.plan.as_ref().map_or(true, TransportPlan::converged),
                solved: matching.plan.is_some(),
            }))
        });

        let mut summary = LevelResult {
            level,
            patch_size: next,
            ..Default::default()
        };
        let mut candidates = Vec::new();
        let mut refined = Vec::new();
        for result in results {
            match result? {
                None => summary.dropped_windows += 1,
                Some(outcome) => {
                    summary.windows += usize::from(outcome.solved);
                    summary.partial_windows += usize::from(outcome.partial);
                    summary.non_converged += usize::from(!outcome.converged);
                    summary.max_marginal_error = summary.max_marginal_error.max(outcome.marginal_error);
                    for (cand, corr) in outcome.candidates {
                        candidates.push(cand);
                        refined.push(corr);
                    }
                }
            }
        }
        summary.candidates = candidates.len();
        let trimmed = trim_subpatches(&candidates, source_size.1 / next, source_size.0 / next, next, level)?;
        let mut set = CorrespondenceSet {
            level,
            ..Default::default()
        };
        if summary.non_converged > 0 {
            set.warnings.push(Warning::NotConverged {
                marginal_error: summary.max_marginal_error,
                iterations: config.sinkhorn.max_iters,
            });
        }
        set.matches = trimmed.survivors.iter().map(|&k| refined[k]).collect();
        summary.correspondences = set.len();
        summaries.push(summary);
        current = set;
    }

    Ok(HierarchyOutput {
        coarse,
        coarse_source: source_grid,
        coarse_target: target_grid,
        levels: summaries,
        correspondences: current,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_pair, GroundTruthWarp};
    use alloc::vec;
    use approx::assert_relative_eq;

    fn row_plan(row: &[f64], areas: &[f64]) -> TransportPlan {
        let m = row.len();
        let mut entries = vec![0.0; 2 * (m + 1)];
        entries[..m].copy_from_slice(row);
        for j in 0..m {
            entries[m + 1 + j] = areas[j] - row[j];
        }
        let sent: f64 = row.iter().sum();
        TransportPlan::from_entries(1, m, entries, vec![sent], areas.to_vec()).unwrap()
    }

    #[test]
    fn area_expectation_examples() {
        let target = PatchGrid::dense(32, 1, 2, 1, Point::default(), 1.0);
        let single = target.clone().with_areas(vec![0.25, 1.0]).unwrap();
        let p = row_plan(&[0.2, 0.0], &[0.25, 1.0]);
        assert_relative_eq!(area_expectation(&p, 0, &BBox::cell(0, 0), &single).unwrap(), 0.25);

        let mut bbox = BBox::cell(0, 0);
        bbox.include(0, 1);
        let p = row_plan(&[0.3, 0.45], &[1.0, 1.0]);
        assert_relative_eq!(area_expectation(&p, 0, &bbox, &target).unwrap(), 1.0);

        let p = row_plan(&[0.6, 0.2], &[0.8, 1.0]);
        let mixed = target.with_areas(vec![0.25, 1.0]).unwrap();
        assert_relative_eq!(area_expectation(&p, 0, &bbox, &mixed).unwrap(), 0.4375, epsilon = 1e-12);

        let p = row_plan(&[0.0, 0.0], &[1.0, 1.0]);
        assert_eq!(area_expectation(&p, 0, &bbox, &PatchGrid::dense(32, 1, 2, 1, Point::default(), 1.0)), None);
    }

    #[test]
    fn scale_factor_examples() {
        assert_eq!(scale_factor(1.0, 1.0), Some(1.0));
        assert_eq!(scale_factor(1.0, 0.25), Some(2.0));
        assert_eq!(scale_factor(1.0, 4.0), Some(0.5));
        assert_eq!(scale_factor(1.0, 0.0), None);
        assert_eq!(scale_factor(0.0, 1.0), None);
    }

    #[test]
    fn hierarchy_config_validation() {
        assert!(HierarchyConfig::default().validate().is_ok());
        let bad = HierarchyConfig {
            levels: vec![
                LevelSpec { patch_size: 8, expansion: Some(2) },
                LevelSpec { patch_size: 16, expansion: None },
            ],
        };
        assert!(bad.validate().is_err());
        let bad = HierarchyConfig {
            levels: vec![
                LevelSpec { patch_size: 32, expansion: Some(3) },
                LevelSpec { patch_size: 7, expansion: None },
            ],
        };
        assert!(bad.validate().is_err());
        let bad = HierarchyConfig {
            levels: vec![LevelSpec { patch_size: 32, expansion: Some(3) }],
        };
        assert!(bad.validate().is_err());
    }

    fn corr(source: Point, target: Point, scale: f64) -> Correspondence {
        Correspondence {
            source_index: 0,
            source_pos: source,
            target_pos: target,
            bbox: BBox::cell(0, 0),
            scale,
            confidence: 1.0,
            level: 1,
            root: 0,
            zero_area_weight: false,
        }
    }

    fn textured(w: usize, h: usize) -> Image {
        crate::synth::texture(7, w, h).unwrap()
    }

    #[test]
    fn unit_scale_window_is_a_plain_crop() {
        let img = textured(128, 128);
        let geom = WindowGeometry::new(32, 3, 8, &HandcraftedParams::default());
        let c = corr(Point::new(48.0, 48.0), Point::new(64.0, 64.0), 1.0);
        let pair = crop_and_resize(&img, &img, (128, 128), (128, 128), &c, 0, &geom).unwrap();
        assert!(!pair.partial);
        assert_eq!(pair.target_origin, Point::new(16.0, 16.0));
        let m = pair.margin as isize;
        let crop = img.crop_gray(16 - m, 16 - m, 96 + 2 * pair.margin);
        assert_eq!(pair.resized_target, crop);
    }

    #[test]
    fn corner_window_is_clamped_and_flagged() {
        let img = textured(128, 128);
        let geom = WindowGeometry::new(32, 3, 8, &HandcraftedParams::default());
        let c = corr(Point::new(16.0, 16.0), Point::new(10.0, 5.0), 1.0);
        let pair = crop_and_resize(&img, &img, (128, 128), (128, 128), &c, 0, &geom).unwrap();
        assert_eq!(pair.source_origin, (0, 0));
        assert!(pair.partial);
        assert_eq!(pair.target_origin, Point::new(0.0, 0.0));
    }

    #[test]
    fn magnified_window_correlates_with_source() {
        let warp = GroundTruthWarp::uniform_scale(2.0, (256, 256), (256, 256)).unwrap();
        let pair = generate_pair(11, &warp).unwrap();
        let geom = WindowGeometry::new(32, 3, 8, &HandcraftedParams::default());
        let c = corr(Point::new(80.0, 80.0), Point::new(160.0, 160.0), 2.0);
        let w = crop_and_resize(&pair.source, &pair.target, (256, 256), (256, 256), &c, 0, &geom).unwrap();
        assert!(!w.partial);
        let a = w.source_window.data();
        let b = w.resized_target.data();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (ma, mb) = (mean(a), mean(b));
        let (mut num, mut da, mut db) = (0.0, 0.0, 0.0);
        for (x, y) in a.iter().zip(b) {
            num += (x - ma) * (y - mb);
            da += (x - ma) * (x - ma);
            db += (y - mb) * (y - mb);
        }
        let ncc = num / (da * db).sqrt();
        assert!(ncc >= 0.9, "ncc {ncc}");
    }

    #[test]
    fn subdivision_counts_and_spacing() {
        let img = textured(256, 256);
        let params = HandcraftedParams::default();

        let geom = WindowGeometry::new(32, 3, 8, &params);
        let c = corr(Point::new(112.0, 112.0), Point::new(112.0, 112.0), 1.0);
        let pair = crop_and_resize(&img, &img, (256, 256), (256, 256), &c, 0, &geom).unwrap();
        let (sg, tg) = subdivide(&pair, (256, 256), 8, 2).unwrap();
        assert_eq!((sg.len(), tg.len()), (144, 144));

        let geom = WindowGeometry::new(8, 2, 2, &params);
        let c = corr(Point::new(100.0, 100.0), Point::new(100.0, 100.0), 1.0);
        let pair = crop_and_resize(&img, &img, (256, 256), (256, 256), &c, 0, &geom).unwrap();
        let (sg, tg) = subdivide(&pair, (256, 256), 2, 3).unwrap();
        assert_eq!((sg.len(), tg.len()), (64, 64));
        // Source sub-patch centers sit on the global 2-px lattice.
        for (k, p) in sg.positions().iter().enumerate() {
            let (r, c) = sg.cell_of(k);
            assert_eq!(*p, Point::new(c as f64 * 2.0 + 1.0, r as f64 * 2.0 + 1.0));
        }

        let geom = WindowGeometry::new(32, 3, 8, &params);
        let c = corr(Point::new(112.0, 112.0), Point::new(56.0, 56.0), 0.5);
        let pair = crop_and_resize(&img, &img, (256, 256), (256, 256), &c, 0, &geom).unwrap();
        let (_, tg) = subdivide(&pair, (256, 256), 8, 2).unwrap();
        assert_relative_eq!(tg.position(1).x - tg.position(0).x, 4.0, epsilon = 1e-12);
        assert_relative_eq!(tg.position(12).y - tg.position(0).y, 4.0, epsilon = 1e-12);
    }

    fn cand(x: f64, y: f64, owner: usize, local: usize, score: f64) -> SubpatchCandidate {
        SubpatchCandidate {
            center: Point::new(x, y),
            owner,
            local,
            score,
        }
    }

    #[test]
    fn trimming_examples() {
        let single = [cand(4.0, 4.0, 0, 0, 0.3)];
        let t = trim_subpatches(&single, 2, 2, 8, 2).unwrap();
        assert_eq!(t.survivors, vec![0]);
        assert_eq!(t.grid.cells(), &[0]);

        let two = [cand(12.0, 4.0, 0, 0, 0.4), cand(12.0, 4.0, 1, 5, 0.9)];
        let t = trim_subpatches(&two, 2, 2, 8, 2).unwrap();
        assert_eq!(t.survivors, vec![1]);
        assert_eq!(t.grid.cells(), &[1]);

        let tie = [cand(4.0, 12.0, 3, 0, 0.5), cand(4.0, 12.0, 1, 9, 0.5), cand(4.0, 12.0, 1, 2, 0.5)];
        let t = trim_subpatches(&tie, 2, 2, 8, 2).unwrap();
        assert_eq!(t.survivors, vec![2]);
    }

    #[test]
    fn blank_pair_yields_nothing() {
        let img = Image::filled(64, 64, 0.5).unwrap();
        let out = run_hierarchy(&HierarchyInput::new(&img, &img), &PipelineConfig::default()).unwrap();
        assert!(out.correspondences.is_empty());
        assert!(out.correspondences.warnings.contains(&Warning::NoCoarseMatches));
    }
}
