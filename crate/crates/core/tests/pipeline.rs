use pats_core::*;
use std::collections::HashSet;

/// Runs jobs back to front.
struct Reversed;

impl WindowExecutor for Reversed {
    fn execute<R, F>(&self, jobs: usize, job: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync,
    {
        let mut out: Vec<R> = (0..jobs).rev().map(job).collect();
        out.reverse();
        out
    }
}

fn identity_run(seed: u64, size: usize) -> (SynthPair, HierarchyOutput) {
    let warp = GroundTruthWarp::identity((size, size), (size, size));
    let pair = generate_pair(seed, &warp).unwrap();
    let out = run_hierarchy(&HierarchyInput::new(&pair.source, &pair.target), &PipelineConfig::default()).unwrap();
    (pair, out)
}

#[test]
fn identity_pair_is_accurate() {
    let (pair, out) = identity_run(31, 128);
    let report = evaluate(&out.correspondences.matches, &pair.warp, &EvalConfig::default());
    assert!(report.mean_epe <= 1.0, "{report:?}");
    assert!(report.precision >= 0.95, "{report:?}");
    assert_eq!(out.correspondences.level, 3);
    assert!(out.correspondences.matches.iter().all(|c| c.level == 3));
}

#[test]
fn finest_targets_stay_inside_the_target() {
    let warp = GroundTruthWarp::uniform_scale(2.0, (128, 128), (128, 128)).unwrap();
    let pair = generate_pair(32, &warp).unwrap();
    for areas in [
        AreaBackend::Unit,
        AreaBackend::GroundTruth {
            warp: warp.clone(),
            max_area: 16.0,
        },
    ] {
        let input = HierarchyInput::new(&pair.source, &pair.target).with_target_areas(areas);
        let out = run_hierarchy(&input, &PipelineConfig::default()).unwrap();
        for c in &out.correspondences.matches {
            let p = c.target_pos;
            assert!(p.x >= 0.0 && p.y >= 0.0 && p.x <= 128.0 && p.y <= 128.0, "{p:?}");
        }
    }
}

#[test]
fn refinement_never_adds_roots() {
    let (_, out) = identity_run(33, 128);
    let coarse: HashSet<usize> = out.coarse.set.matches.iter().map(|c| c.source_index).collect();
    let fine: HashSet<usize> = out.correspondences.matches.iter().map(|c| c.root).collect();
    assert!(fine.is_subset(&coarse));
    for level in &out.levels {
        assert!(level.correspondences <= level.candidates);
    }
    let cells: HashSet<usize> = out.correspondences.matches.iter().map(|c| c.source_index).collect();
    assert_eq!(cells.len(), out.correspondences.len());
}

#[test]
fn window_order_does_not_matter() {
    let warp = GroundTruthWarp::identity((128, 128), (128, 128));
    let pair = generate_pair(34, &warp).unwrap();
    let input = HierarchyInput::new(&pair.source, &pair.target);
    let cfg = PipelineConfig::default();
    let a = run_hierarchy_with(&input, &cfg, &Sequential).unwrap();
    let b = run_hierarchy_with(&input, &cfg, &Reversed).unwrap();
    assert_eq!(a, b);
}

#[test]
fn ground_truth_areas_recover_magnification() {
    let warp = GroundTruthWarp::uniform_scale(2.0, (256, 256), (256, 256)).unwrap();
    let pair = generate_pair(35, &warp).unwrap();
    let input = HierarchyInput::new(&pair.source, &pair.target).with_target_areas(AreaBackend::GroundTruth {
        warp: warp.clone(),
        max_area: 16.0,
    });
    let out = run_hierarchy(&input, &PipelineConfig::default()).unwrap();
    let mut scales: Vec<f64> = out
        .correspondences
        .matches
        .iter()
        .filter(|c| warp.is_covisible(c.source_pos))
        .map(|c| c.scale)
        .collect();
    assert!(!scales.is_empty());
    scales.sort_by(f64::total_cmp);
    let median = scales[scales.len() / 2];
    assert!((median - 2.0).abs() <= 0.1, "median scale {median}");
}

#[test]
fn blank_images_give_no_matches() {
    let blank = Image::filled(64, 64, 0.3).unwrap();
    let out = run_hierarchy(&HierarchyInput::new(&blank, &blank), &PipelineConfig::default()).unwrap();
    assert!(out.correspondences.is_empty());
    assert!(out.correspondences.warnings.contains(&Warning::NoCoarseMatches));
}
