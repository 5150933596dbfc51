use pats_core::*;
use pats_testkit::trim::{brute_force_survivors, Candidate};
use pats_testkit::SplitMix64;
use std::collections::HashSet;

const COARSE: usize = 32;
const FINE: usize = 8;
const SIZE: usize = 128;

fn identity_corr(i: usize, p: Point) -> Correspondence {
    Correspondence {
        source_index: i,
        source_pos: p,
        target_pos: p,
        bbox: BBox::cell(0, 0),
        scale: 1.0,
        confidence: 1.0,
        level: 1,
        root: i,
        zero_area_weight: false,
    }
}

/// Sub-patch centers of every n=3 window on the 4x4 coarse grid, from the
/// library's window placement.
fn library_windows() -> Vec<PatchGrid> {
    let image = texture(21, SIZE, SIZE).unwrap();
    let coarse = build_patch_grid(&image, COARSE).unwrap();
    let geometry = WindowGeometry::new(COARSE, 3, FINE, &HandcraftedParams::default());
    (0..coarse.len())
        .map(|i| {
            let corr = identity_corr(i, coarse.position(i));
            let pair = crop_and_resize(&image, &image, (SIZE, SIZE), (SIZE, SIZE), &corr, i, &geometry).unwrap();
            subdivide(&pair, (SIZE, SIZE), FINE, 2).unwrap().0
        })
        .collect()
}

/// Window origins worked out by hand: a 96 px window centered on a coarse
/// center `32k + 16` starts at `32k - 32`, clamped into `[0, 32]`.
fn oracle_centers(i: usize) -> Vec<(f64, f64)> {
    let (r, c) = (i / 4, i % 4);
    let origin = |k: usize| (32 * k as isize - 32).clamp(0, 32) as f64;
    let (ox, oy) = (origin(c), origin(r));
    let mut out = Vec::new();
    for v in 0..12 {
        for u in 0..12 {
            out.push((ox + (u as f64 + 0.5) * 8.0, oy + (v as f64 + 0.5) * 8.0));
        }
    }
    out
}

#[test]
fn windows_align_with_the_fine_lattice() {
    for (i, grid) in library_windows().iter().enumerate() {
        let got: Vec<(f64, f64)> = grid.positions().iter().map(|p| (p.x, p.y)).collect();
        assert_eq!(got, oracle_centers(i), "window {i}");
    }
}

fn check_against_oracle(seed: u64, levels: u32) {
    let windows = library_windows();
    let mut rng = SplitMix64::new(seed);
    let mut candidates = Vec::new();
    let mut oracle = Vec::new();
    for (owner, grid) in windows.iter().enumerate() {
        for (local, &p) in grid.positions().iter().enumerate() {
            // Few distinct scores so ties are common.
            let score = (rng.next_u64() % levels as u64) as f64 / levels as f64;
            candidates.push(SubpatchCandidate {
                center: p,
                owner,
                local,
                score,
            });
            oracle.push(Candidate {
                center: (p.x, p.y),
                owner,
                local,
                score,
            });
        }
    }
    let rows = SIZE / FINE;
    let trimmed = trim_subpatches(&candidates, rows, rows, FINE, 2).unwrap();
    let expected = brute_force_survivors(&oracle, rows, rows, FINE as f64);

    let mut k = 0;
    for (cell, want) in expected.iter().enumerate() {
        match want {
            Some(w) => {
                assert_eq!(trimmed.grid.cells()[k], cell);
                let got = &candidates[trimmed.survivors[k]];
                assert_eq!((got.owner, got.local, got.score), (w.owner, w.local, w.score), "cell {cell}");
                k += 1;
            }
            None => assert!(!trimmed.grid.cells().contains(&cell)),
        }
    }
    assert_eq!(k, trimmed.grid.len());

    let unique: HashSet<usize> = trimmed.grid.cells().iter().copied().collect();
    assert_eq!(unique.len(), trimmed.grid.len());
    for (k, &idx) in trimmed.survivors.iter().enumerate() {
        let c = candidates[idx].center;
        let (r, col) = trimmed.grid.cell_of(k);
        assert_eq!(((c.y / 8.0) as usize, (c.x / 8.0) as usize), (r, col));
    }
}

#[test]
fn trimming_matches_brute_force() {
    for seed in 0..10 {
        check_against_oracle(seed, 3);
        check_against_oracle(100 + seed, 1000);
    }
}
