//! Patch grids: the (position, area, descriptor) triplet for every tile.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Mul, Sub};

use crate::error::{invalid, Result};
use crate::image::Image;
use crate::math::hypot;

/// A 2D point in continuous image coordinates (`x` along columns, `y` along rows).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        hypot(self.x - other.x, self.y - other.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, rhs: f64) -> Point {
        Point::new(self.x * rhs, self.y * rhs)
    }
}

/// Inclusive axis-aligned box of grid cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BBox {
    pub min_row: usize,
    pub min_col: usize,
    pub max_row: usize,
    pub max_col: usize,
}

impl BBox {
    pub fn cell(row: usize, col: usize) -> Self {
        Self {
            min_row: row,
            min_col: col,
            max_row: row,
            max_col: col,
        }
    }

    pub fn include(&mut self, row: usize, col: usize) {
        self.min_row = self.min_row.min(row);
        self.min_col = self.min_col.min(col);
        self.max_row = self.max_row.max(row);
        self.max_col = self.max_col.max(col);
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.min_row..=self.max_row).contains(&row) && (self.min_col..=self.max_col).contains(&col)
    }

    pub fn cell_count(&self) -> usize {
        (self.max_row - self.min_row + 1) * (self.max_col - self.min_col + 1)
    }

    /// Cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.min_row..=self.max_row).flat_map(move |r| (self.min_col..=self.max_col).map(move |c| (r, c)))
    }
}

/// Per-patch status bits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PatchFlags(u8);

impl PatchFlags {
    /// Patch lies (partly) in right/bottom zero padding.
    pub const PADDED: PatchFlags = PatchFlags(1);
    /// Zero intensity variance; such patches carry no transportable area.
    pub const FLAT: PatchFlags = PatchFlags(2);
    /// Area came from a near-singular Jacobian and was clamped.
    pub const AREA_CLAMPED: PatchFlags = PatchFlags(4);

    pub const fn empty() -> Self {
        PatchFlags(0)
    }

    pub const fn contains(self, other: PatchFlags) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn insert(&mut self, other: PatchFlags) {
        self.0 |= other.0;
    }

    pub const fn bits(self) -> u8 {
        self.0
    }
}

/// A set of square patches laid out on a `rows x cols` lattice.
///
/// Grids built from a whole image are dense (`cells[i] == i`). Grids produced
/// by trimming are sparse subsets of the global lattice, kept sorted by cell.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchGrid {
    patch_size: usize,
    rows: usize,
    cols: usize,
    level: usize,
    cells: Vec<usize>,
    positions: Vec<Point>,
    areas: Vec<f64>,
    dim: usize,
    descriptors: Vec<f64>,
    flags: Vec<PatchFlags>,
}

/// Tiles `image` into `patch_size` squares with centers at `((c+0.5)s, (r+0.5)s)`,
/// unit areas and zeroed descriptors. Patches made of a single constant value
/// are flagged [`PatchFlags::FLAT`].
pub fn build_patch_grid(image: &Image, patch_size: usize) -> Result<PatchGrid> {
    if patch_size == 0 {
        return Err(invalid("patch size must be positive"));
    }
    if image.width() % patch_size != 0 || image.height() % patch_size != 0 {
        return Err(invalid("patch size must divide both image dimensions; pad the image first"));
    }
    let rows = image.height() / patch_size;
    let cols = image.width() / patch_size;
    let mut grid = PatchGrid::dense(patch_size, rows, cols, 1, Point::new(0.0, 0.0), 1.0);
    for (i, flag) in grid.flags.iter_mut().enumerate() {
        let (r, c) = (i / cols, i % cols);
        if image.is_constant_region(c * patch_size, r * patch_size, patch_size, patch_size) {
            flag.insert(PatchFlags::FLAT);
        }
    }
    Ok(grid)
}

impl PatchGrid {
    /// Dense grid whose patch centers are `origin + spacing * ((c+0.5)s, (r+0.5)s)`.
    pub fn dense(patch_size: usize, rows: usize, cols: usize, level: usize, origin: Point, spacing: f64) -> Self {
        let n = rows * cols;
        let s = patch_size as f64;
        let positions = (0..n)
            .map(|i| {
                let (r, c) = ((i / cols) as f64, (i % cols) as f64);
                Point::new(origin.x + spacing * (c + 0.5) * s, origin.y + spacing * (r + 0.5) * s)
            })
            .collect();
        Self {
            patch_size,
            rows,
            cols,
            level,
            cells: (0..n).collect(),
            positions,
            areas: vec![1.0; n],
            dim: 0,
            descriptors: Vec::new(),
            flags: vec![PatchFlags::empty(); n],
        }
    }

    /// Sparse grid over a global lattice. `cells` must be strictly increasing.
    pub fn sparse(
        patch_size: usize,
        rows: usize,
        cols: usize,
        level: usize,
        cells: Vec<usize>,
        positions: Vec<Point>,
    ) -> Result<Self> {
        if cells.len() != positions.len() {
            return Err(invalid("cells and positions differ in length"));
        }
        if cells.windows(2).any(|w| w[0] >= w[1]) || cells.last().is_some_and(|&c| c >= rows * cols) {
            return Err(invalid("sparse cells must be strictly increasing and inside the lattice"));
        }
        let n = cells.len();
        Ok(Self {
            patch_size,
            rows,
            cols,
            level,
            cells,
            positions,
            areas: vec![1.0; n],
            dim: 0,
            descriptors: Vec::new(),
            flags: vec![PatchFlags::empty(); n],
        })
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn is_dense(&self) -> bool {
        self.cells.len() == self.rows * self.cols
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn position(&self, i: usize) -> Point {
        self.positions[i]
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn area(&self, i: usize) -> f64 {
        self.areas[i]
    }

    pub fn flags(&self) -> &[PatchFlags] {
        &self.flags
    }

    pub fn flag(&self, i: usize) -> PatchFlags {
        self.flags[i]
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    /// Descriptor dimension; 0 until descriptors are attached.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major `len() x dim()` descriptor matrix.
    pub fn descriptors(&self) -> &[f64] {
        &self.descriptors
    }

    pub fn descriptor(&self, i: usize) -> &[f64] {
        &self.descriptors[i * self.dim..(i + 1) * self.dim]
    }

    /// Lattice `(row, col)` of patch `i`.
    pub fn cell_of(&self, i: usize) -> (usize, usize) {
        let cell = self.cells[i];
        (cell / self.cols, cell % self.cols)
    }

    /// Patch index occupying lattice cell `(row, col)`, if any.
    pub fn index_of(&self, row: usize, col: usize) -> Option<usize> {
        if row >= self.rows || col >= self.cols {
            return None;
        }
        let cell = row * self.cols + col;
        if self.is_dense() {
            Some(cell)
        } else {
            self.cells.binary_search(&cell).ok()
        }
    }

    /// Lattice cell containing a point, using this grid's own center layout.
    pub fn cell_containing(&self, p: Point) -> Option<(usize, usize)> {
        let origin = self.lattice_origin();
        let spacing = self.lattice_spacing();
        let fx = (p.x - origin.x) / spacing;
        let fy = (p.y - origin.y) / spacing;
        if !(fx >= 0.0 && fy >= 0.0) {
            return None;
        }
        let (c, r) = (fx as usize, fy as usize);
        (r < self.rows && c < self.cols).then_some((r, c))
    }

    /// Top-left corner of the lattice, recovered from the first patch.
    fn lattice_origin(&self) -> Point {
        match self.positions.first() {
            None => Point::default(),
            Some(&p) => {
                let (r, c) = self.cell_of(0);
                let d = self.lattice_spacing();
                Point::new(p.x - (c as f64 + 0.5) * d, p.y - (r as f64 + 0.5) * d)
            }
        }
    }

    /// Center-to-center distance between lattice neighbours.
    fn lattice_spacing(&self) -> f64 {
        if self.len() >= 2 && self.is_dense() && self.cols >= 2 {
            self.positions[1].x - self.positions[0].x
        } else if self.len() >= 2 && self.is_dense() && self.rows >= 2 {
            self.positions[self.cols].y - self.positions[0].y
        } else {
            self.patch_size as f64
        }
    }

    pub fn with_descriptors(mut self, dim: usize, descriptors: Vec<f64>) -> Result<Self> {
        if descriptors.len() != dim * self.len() {
            return Err(invalid("descriptor matrix does not match grid size"));
        }
        self.dim = dim;
        self.descriptors = descriptors;
        Ok(self)
    }

    pub fn with_areas(mut self, areas: Vec<f64>) -> Result<Self> {
        if areas.len() != self.len() {
            return Err(invalid("area vector does not match grid size"));
        }
        if areas.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(invalid("areas must be finite and non-negative"));
        }
        self.areas = areas;
        Ok(self)
    }

    pub fn with_positions(mut self, positions: Vec<Point>) -> Result<Self> {
        if positions.len() != self.len() {
            return Err(invalid("position vector does not match grid size"));
        }
        self.positions = positions;
        Ok(self)
    }

    pub fn with_flags(mut self, flags: Vec<PatchFlags>) -> Result<Self> {
        if flags.len() != self.len() {
            return Err(invalid("flag vector does not match grid size"));
        }
        self.flags = flags;
        Ok(self)
    }

    /// Adds `flag` to every patch whose tile reaches past `width x height`
    /// (the unpadded image extent).
    pub fn flag_padding(mut self, width: usize, height: usize) -> Self {
        let half = self.patch_size as f64 / 2.0;
        for (p, f) in self.positions.iter().zip(self.flags.iter_mut()) {
            if p.x + half > width as f64 || p.y + half > height as f64 {
                f.insert(PatchFlags::PADDED);
            }
        }
        self
    }

    /// Whether the patch can send or receive transport mass.
    pub fn is_transportable(&self, i: usize) -> bool {
        let f = self.flags[i];
        !f.contains(PatchFlags::FLAT) && !f.contains(PatchFlags::PADDED)
    }
}
