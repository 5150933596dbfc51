//! From a transport plan to per-patch correspondences.
//!
//! For source patch `i` the target patch receiving most of its area seeds a
//! 4-connected flood fill over targets with `P[i, j] >= eps`. The bounding
//! box of that region is the set of corresponding target patches, and the
//! matched position is their center average weighted by `sqrt(P[i, j] / a_j)`.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::grid::{BBox, PatchGrid, Point};
use crate::math::sqrt;
use crate::ot::{cost_matrix, solve_transport, SinkhornConfig, TransportPlan};
use crate::subdivision::{area_expectation, scale_factor};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct MatcherConfig {
    /// Minimum plan mass for a target patch to join the flood fill.
    pub flood_threshold: f64,
    /// Matches transporting less area than this into their box are dropped.
    pub min_confidence: f64,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self {
            flood_threshold: 1e-5,
            min_confidence: 0.1,
        }
    }
}

impl MatcherConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.flood_threshold > 0.0) {
            return Err(invalid("flood threshold must be positive"));
        }
        if !(self.min_confidence >= 0.0) {
            return Err(invalid("min_confidence must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Correspondence {
    pub source_index: usize,
    pub source_pos: Point,
    pub target_pos: Point,
    pub bbox: BBox,
    /// Target-over-source scale; cumulative across hierarchy levels.
    pub scale: f64,
    /// Area transported into the bounding box.
    pub confidence: f64,
    pub level: usize,
    /// Level-1 source patch this correspondence descends from.
    pub root: usize,
    /// Some box patch had zero area but received mass.
    pub zero_area_weight: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum UnmatchedReason {
    /// Flat or padded source patch.
    Untransportable,
    /// No real target reaches the flood threshold.
    NoFeasibleTarget,
    LowConfidence,
    ZeroWeight,
    /// The cropped target window misses the target image.
    WindowOutsideTarget,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Outcome {
    Matched(Correspondence),
    Unmatched(UnmatchedReason),
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Warning {
    NotConverged { marginal_error: f64, iterations: usize },
    /// Every coarse source patch went unmatched.
    NoCoarseMatches,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorrespondenceSet {
    pub level: usize,
    /// Ordered by source index.
    pub matches: Vec<Correspondence>,
    pub unmatched: Vec<(usize, UnmatchedReason)>,
    pub warnings: Vec<Warning>,
}

impl CorrespondenceSet {
    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }
}

/// Result of matching two grids.
#[derive(Clone, Debug, PartialEq)]
pub struct GridMatching {
    /// `None` when one side had nothing transportable.
    pub plan: Option<TransportPlan>,
    pub set: CorrespondenceSet,
    /// Per source patch: area transported into its box (0 when unmatched
    /// before a box existed).
    pub transported: Vec<f64>,
}

/// Real target column receiving the most area from source `i`; ties go to
/// the smallest index. `None` when the row holds no mass.
pub fn argmax_target(plan: &TransportPlan, i: usize) -> Option<usize> {
    let row = plan.row(i);
    let mut best: Option<(usize, f64)> = None;
    for (j, &p) in row.iter().enumerate() {
        if p > best.map_or(0.0, |b| b.1) {
            best = Some((j, p));
        }
    }
    best.map(|b| b.0)
}

/// Maximal 4-connected set of targets with `P[i, j] >= flood_threshold`
/// containing `seed`, on a dense `rows x cols` target lattice. Sorted.
pub fn flood_region(
    plan: &TransportPlan,
    i: usize,
    seed: usize,
    shape: (usize, usize),
    config: &MatcherConfig,
) -> Vec<usize> {
    let (rows, cols) = shape;
    let row = plan.row(i);
    debug_assert_eq!(row.len(), rows * cols);
    let feasible = |j: usize| row[j] >= config.flood_threshold;
    if seed >= row.len() || !feasible(seed) {
        return Vec::new();
    }
    let mut seen = vec![false; rows * cols];
    let mut queue = VecDeque::new();
    let mut region = Vec::new();
    seen[seed] = true;
    queue.push_back(seed);
    while let Some(j) = queue.pop_front() {
        region.push(j);
        let (r, c) = (j / cols, j % cols);
        let mut visit = |nr: usize, nc: usize| {
            let k = nr * cols + nc;
            if !seen[k] && feasible(k) {
                seen[k] = true;
                queue.push_back(k);
            }
        };
        if r > 0 {
            visit(r - 1, c);
        }
        if r + 1 < rows {
            visit(r + 1, c);
        }
        if c > 0 {
            visit(r, c - 1);
        }
        if c + 1 < cols {
            visit(r, c + 1);
        }
    }
    region.sort_unstable();
    region
}

/// Builds the correspondence of source patch `i`. The returned value is the
/// outcome plus the area transported into the box (0 without a box).
pub fn extract_correspondence(
    plan: &TransportPlan,
    i: usize,
    source: &PatchGrid,
    target: &PatchGrid,
    config: &MatcherConfig,
) -> Result<(Outcome, f64)> {
    if plan.n_sources() != source.len() || plan.n_targets() != target.len() {
        return Err(invalid("plan shape does not match the grids"));
    }
    if !target.is_dense() {
        return Err(invalid("target grid must be dense"));
    }
    if i >= source.len() {
        return Err(Error::DimensionMismatch {
            what: "source index",
            expected: source.len(),
            actual: i,
        });
    }
    let Some(seed) = argmax_target(plan, i) else {
        return Ok((Outcome::Unmatched(UnmatchedReason::NoFeasibleTarget), 0.0));
    };
    let region = flood_region(plan, i, seed, (target.rows(), target.cols()), config);
    if region.is_empty() {
        return Ok((Outcome::Unmatched(UnmatchedReason::NoFeasibleTarget), 0.0));
    }
    let (r0, c0) = target.cell_of(region[0]);
    let mut bbox = BBox::cell(r0, c0);
    for &j in &region[1..] {
        let (r, c) = target.cell_of(j);
        bbox.include(r, c);
    }

    let mut weight_sum = 0.0;
    let mut weighted = Point::new(0.0, 0.0);
    let mut confidence = 0.0;
    let mut zero_area_weight = false;
    for (r, c) in bbox.cells() {
        let j = r * target.cols() + c;
        let mass = plan.get(i, j);
        let area = target.area(j);
        if area <= 0.0 && mass > 0.0 {
            zero_area_weight = true;
        }
        let w = sqrt(mass / area.max(1e-12));
        weight_sum += w;
        weighted = weighted + target.position(j) * w;
        confidence += mass;
    }
    if !(weight_sum > 0.0) {
        return Ok((Outcome::Unmatched(UnmatchedReason::ZeroWeight), confidence));
    }
    if confidence < config.min_confidence {
        return Ok((Outcome::Unmatched(UnmatchedReason::LowConfidence), confidence));
    }
    let target_pos = weighted * (1.0 / weight_sum);
    let expected_area = area_expectation(plan, i, &bbox, target)
        .ok_or_else(|| invalid("box carries no transported area"))?;
    let Some(scale) = scale_factor(source.area(i), expected_area) else {
        return Ok((Outcome::Unmatched(UnmatchedReason::ZeroWeight), confidence));
    };
    Ok((
        Outcome::Matched(Correspondence {
            source_index: i,
            source_pos: source.position(i),
            target_pos,
            bbox,
            scale,
            confidence,
            level: source.level(),
            root: i,
            zero_area_weight,
        }),
        confidence,
    ))
}

/// Cost matrix, transport and correspondence extraction for two described
/// grids. Flat or padded patches take part with zero area.
pub fn match_grids(
    source: &PatchGrid,
    target: &PatchGrid,
    ot: &SinkhornConfig,
    config: &MatcherConfig,
) -> Result<GridMatching> {
    config.validate()?;
    if source.dim() == 0 || target.dim() == 0 {
        return Err(invalid("both grids need descriptors"));
    }
    let source_areas: Vec<f64> = (0..source.len())
        .map(|i| if source.is_transportable(i) { source.area(i) } else { 0.0 })
        .collect();
    let target_areas: Vec<f64> = (0..target.len())
        .map(|j| if target.is_transportable(j) { target.area(j) } else { 0.0 })
        .collect();

    let mut set = CorrespondenceSet {
        level: source.level(),
        ..Default::default()
    };
    let mut transported = vec![0.0; source.len()];

    let nothing_to_send = !source_areas.iter().any(|&a| a > 0.0);
    let nothing_to_receive = !target_areas.iter().any(|&a| a > 0.0);
    if nothing_to_send || nothing_to_receive {
        for i in 0..source.len() {
            let reason = if source_areas[i] > 0.0 {
                UnmatchedReason::NoFeasibleTarget
            } else {
                UnmatchedReason::Untransportable
            };
            set.unmatched.push((i, reason));
        }
        return Ok(GridMatching {
            plan: None,
            set,
            transported,
        });
    }

    let costs = cost_matrix(source.descriptors(), source.dim(), target.descriptors(), target.dim())?;
    let plan = solve_transport(&costs, &source_areas, &target_areas, ot)?;
    if !plan.converged() {
        set.warnings.push(Warning::NotConverged {
            marginal_error: plan.marginal_error(),
            iterations: plan.iterations(),
        });
    }
    for i in 0..source.len() {
        if source_areas[i] <= 0.0 {
            set.unmatched.push((i, UnmatchedReason::Untransportable));
            continue;
        }
        let (outcome, mass) = extract_correspondence(&plan, i, source, target, config)?;
        transported[i] = mass;
        match outcome {
            Outcome::Matched(c) => set.matches.push(c),
            Outcome::Unmatched(reason) => set.unmatched.push((i, reason)),
        }
    }
    Ok(GridMatching {
        plan: Some(plan),
        set,
        transported,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;

    /// One source patch against a dense target lattice; real row given,
    /// remainder in the dustbin.
    fn plan_row(row: &[f64], target_areas: &[f64]) -> TransportPlan {
        let m = row.len();
        let mut entries = vec![0.0; 2 * (m + 1)];
        entries[..m].copy_from_slice(row);
        let sent: f64 = row.iter().sum();
        entries[m] = (1.0 - sent).max(0.0);
        for j in 0..m {
            entries[m + 1 + j] = (target_areas[j] - row[j]).max(0.0);
        }
        TransportPlan::from_entries(1, m, entries, vec![1.0], target_areas.to_vec()).unwrap()
    }

    fn grids(target_rows: usize, target_cols: usize, s: usize) -> (PatchGrid, PatchGrid) {
        let source = PatchGrid::dense(s, 1, 1, 1, Point::default(), 1.0);
        let target = PatchGrid::dense(s, target_rows, target_cols, 1, Point::default(), 1.0);
        (source, target)
    }

    #[test]
    fn argmax_examples() {
        assert_eq!(argmax_target(&plan_row(&[0.2, 0.7, 0.1], &[1.0; 3]), 0), Some(1));
        assert_eq!(argmax_target(&plan_row(&[0.5, 0.5], &[1.0; 2]), 0), Some(0));
        assert_eq!(argmax_target(&plan_row(&[0.0, 0.0], &[1.0; 2]), 0), None);
    }

    #[test]
    fn flood_examples() {
        let cfg = MatcherConfig::default();
        let p = plan_row(&[0.0, 0.0, 0.0, 0.9], &[1.0; 4]);
        assert_eq!(flood_region(&p, 0, 3, (2, 2), &cfg), vec![3]);

        // [[0.3, 0.3], [0.3, 0]]: the three feasible cells connect through (0,0).
        let p = plan_row(&[0.3, 0.3, 0.3, 0.0], &[1.0; 4]);
        assert_eq!(flood_region(&p, 0, 0, (2, 2), &cfg), vec![0, 1, 2]);
        assert_eq!(flood_region(&p, 0, 1, (2, 2), &cfg), vec![0, 1, 2]);

        // Diagonal neighbours are not 4-connected.
        let p = plan_row(&[0.5, 0.0, 0.0, 0.5], &[1.0; 4]);
        assert_eq!(flood_region(&p, 0, 0, (2, 2), &cfg), vec![0]);
    }

    #[test]
    fn expectation_examples() {
        let cfg = MatcherConfig::default();
        let (source, target) = grids(1, 2, 32);

        let p = plan_row(&[0.0, 1.0], &[1.0, 1.0]);
        let (Outcome::Matched(c), _) = extract_correspondence(&p, 0, &source, &target, &cfg).unwrap() else {
            panic!()
        };
        assert_eq!(c.target_pos, Point::new(48.0, 16.0));

        let p = plan_row(&[0.5, 0.5], &[1.0, 1.0]);
        let (Outcome::Matched(c), _) = extract_correspondence(&p, 0, &source, &target, &cfg).unwrap() else {
            panic!()
        };
        assert_relative_eq!(c.target_pos.x, 32.0, epsilon = 1e-12);
        assert_relative_eq!(c.target_pos.y, 16.0, epsilon = 1e-12);

        // Masses (0.25, 1.0) exceed a unit source row, so build the plan with
        // a source area of 1.25.
        let entries = vec![0.25, 1.0, 0.0, 0.75, 0.0, 0.0];
        let p = TransportPlan::from_entries(1, 2, entries, vec![1.25], vec![1.0, 1.0]).unwrap();
        let (Outcome::Matched(c), _) = extract_correspondence(&p, 0, &source, &target, &cfg).unwrap() else {
            panic!()
        };
        assert_relative_eq!(c.target_pos.x, 16.0 / 3.0 + 48.0 * 2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(c.target_pos.y, 16.0, epsilon = 1e-12);
        assert_relative_eq!(c.confidence, 1.25, epsilon = 1e-12);
    }

    #[test]
    fn box_includes_sub_threshold_patches() {
        let cfg = MatcherConfig::default();
        let (source, target) = grids(2, 2, 32);
        // L-shaped region (0,0),(0,1),(1,1); box covers (1,0) too.
        let p = plan_row(&[0.4, 0.3, 0.04, 0.2], &[1.0; 4]);
        let (Outcome::Matched(c), mass) = extract_correspondence(&p, 0, &source, &target, &cfg).unwrap() else {
            panic!()
        };
        assert_eq!(c.bbox, BBox { min_row: 0, min_col: 0, max_row: 1, max_col: 1 });
        assert_relative_eq!(mass, 0.94, epsilon = 1e-12);
    }

    #[test]
    fn low_confidence_is_unmatched() {
        let cfg = MatcherConfig::default();
        let (source, target) = grids(1, 2, 32);
        let p = plan_row(&[0.05, 0.0], &[1.0, 1.0]);
        let (outcome, mass) = extract_correspondence(&p, 0, &source, &target, &cfg).unwrap();
        assert_eq!(outcome, Outcome::Unmatched(UnmatchedReason::LowConfidence));
        assert_relative_eq!(mass, 0.05);
    }

    #[test]
    fn zero_area_target_is_flagged() {
        let cfg = MatcherConfig::default();
        let (source, target) = grids(1, 2, 32);
        let target = target.with_areas(vec![0.0, 1.0]).unwrap();
        let entries = vec![0.3, 0.6, 0.1, 0.0, 0.4, 0.0];
        let p = TransportPlan::from_entries(1, 2, entries, vec![1.0], vec![0.3, 1.0]).unwrap();
        let (Outcome::Matched(c), _) = extract_correspondence(&p, 0, &source, &target, &cfg).unwrap() else {
            panic!()
        };
        assert!(c.zero_area_weight);
        assert!(c.target_pos.is_finite());
    }
}
