//! Brute-force sub-patch trimming.

/// One overlapped sub-patch as the oracle sees it: a pixel-space center in the
/// global source image plus the score it competes with.
#[derive(Clone, Copy, Debug)]
pub struct Candidate {
    pub center: (f64, f64),
    pub owner: usize,
    pub local: usize,
    pub score: f64,
}

/// For every cell of a `rows x cols` grid with side `cell_size`, scans every
/// candidate, keeps those whose center falls in the cell, and returns the one
/// that beats all others pairwise (higher score, then lower owner, then lower
/// local index). Cells without candidates map to `None`.
pub fn brute_force_survivors(
    candidates: &[Candidate],
    rows: usize,
    cols: usize,
    cell_size: f64,
) -> Vec<Option<Candidate>> {
    let mut out = Vec::with_capacity(rows * cols);
    for row in 0..rows {
        for col in 0..cols {
            let x0 = col as f64 * cell_size;
            let y0 = row as f64 * cell_size;
            let inside: Vec<&Candidate> = candidates
                .iter()
                .filter(|c| {
                    c.center.0 >= x0
                        && c.center.0 < x0 + cell_size
                        && c.center.1 >= y0
                        && c.center.1 < y0 + cell_size
                })
                .collect();
            let winner = inside.iter().find(|a| {
                inside.iter().all(|b| {
                    std::ptr::eq::<Candidate>(**a, *b)
                        || a.score > b.score
                        || (a.score == b.score && (a.owner, a.local) < (b.owner, b.local))
                })
            });
            out.push(winner.map(|c| **c));
        }
    }
    out
}
