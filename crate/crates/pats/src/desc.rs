//! PATS-DESC v1: externally computed patch descriptors and areas.
//!
//! Little-endian layout: magic `PATSDESC`, then `u32` version (1), `u32` N,
//! `u32` d, `u32` patch size, followed by `f32` positions (N x 2, x then y),
//! `f32` areas (N) and `f32` descriptors (N x d, row-major).

use std::fs;
use std::path::Path;

use pats_core::{ImportedPatches, PatchGrid, Point};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"PATSDESC";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;

/// Largest allowed distance between a stored position and the grid center it
/// stands for.
pub const POSITION_TOL: f64 = 1e-3;

pub fn file_len(n: usize, d: usize) -> usize {
    HEADER_LEN + 4 * (2 * n + n + n * d)
}

pub fn read_desc(path: &Path) -> Result<ImportedPatches> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse(path, &bytes)
}

pub fn parse(path: &Path, bytes: &[u8]) -> Result<ImportedPatches> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(path, bytes.len(), "truncated header"));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::format(path, 0, "bad magic (expected PATSDESC)"));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let version = word(8);
    if version != VERSION {
        return Err(Error::format(path, 8, format!("unsupported version {version}")));
    }
    let (n, d, s) = (word(12) as usize, word(16) as usize, word(20) as usize);
    if d == 0 {
        return Err(Error::format(path, 16, "descriptor dimension is zero"));
    }
    if s == 0 {
        return Err(Error::format(path, 20, "patch size is zero"));
    }
    let want = n
        .checked_mul(3 + d)
        .and_then(|v| v.checked_mul(4))
        .and_then(|v| v.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::format(path, 12, "header sizes overflow"))?;
    if bytes.len() < want {
        return Err(Error::format(
            path,
            bytes.len(),
            format!("truncated: header promises {want} bytes"),
        ));
    }
    if bytes.len() > want {
        return Err(Error::format(path, want, "trailing bytes after descriptor table"));
    }

    let mut at = HEADER_LEN;
    let mut next = |what: &str| -> Result<f64> {
        let v = f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as f64;
        if !v.is_finite() {
            return Err(Error::format(path, at, format!("non-finite {what}")));
        }
        at += 4;
        Ok(v)
    };
    let mut positions = Vec::with_capacity(n);
    for _ in 0..n {
        let x = next("position")?;
        let y = next("position")?;
        positions.push(Point::new(x, y));
    }
    let mut areas = Vec::with_capacity(n);
    for _ in 0..n {
        let a = next("area")?;
        if a < 0.0 {
            return Err(Error::format(path, at - 4, "negative area"));
        }
        areas.push(a);
    }
    let mut descriptors = Vec::with_capacity(n * d);
    for _ in 0..n * d {
        descriptors.push(next("descriptor")?);
    }
    Ok(ImportedPatches {
        patch_size: s,
        dim: d,
        positions,
        areas,
        descriptors,
    })
}

pub fn encode(patches: &ImportedPatches) -> Vec<u8> {
    let n = patches.len();
    let mut out = Vec::with_capacity(file_len(n, patches.dim));
    out.extend_from_slice(MAGIC);
    for v in [VERSION, n as u32, patches.dim as u32, patches.patch_size as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for p in &patches.positions {
        out.extend_from_slice(&(p.x as f32).to_le_bytes());
        out.extend_from_slice(&(p.y as f32).to_le_bytes());
    }
    for &a in patches.areas.iter().chain(&patches.descriptors) {
        out.extend_from_slice(&(a as f32).to_le_bytes());
    }
    out
}

pub fn write_desc(patches: &ImportedPatches, path: &Path) -> Result<()> {
    fs::write(path, encode(patches)).map_err(|e| Error::io(path, e))
}

/// Checks that `patches` describes exactly the patches of `grid`.
pub fn check_grid(path: &Path, patches: &ImportedPatches, grid: &PatchGrid) -> Result<()> {
    if patches.patch_size != grid.patch_size() {
        return Err(Error::data(
            path,
            format!(
                "patch size {} does not match the coarsest level ({})",
                patches.patch_size,
                grid.patch_size()
            ),
        ));
    }
    if patches.len() != grid.len() {
        return Err(Error::data(
            path,
            format!("{} patches, but the image grid has {}", patches.len(), grid.len()),
        ));
    }
    for (k, (p, q)) in patches.positions.iter().zip(grid.positions()).enumerate() {
        if p.distance(*q) > POSITION_TOL {
            return Err(Error::data(
                path,
                format!("patch {k} at ({}, {}) but the grid center is ({}, {})", p.x, p.y, q.x, q.y),
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(n_side: usize, d: usize, s: usize) -> ImportedPatches {
        let n = n_side * n_side;
        let positions = (0..n)
            .map(|i| {
                let (r, c) = (i / n_side, i % n_side);
                Point::new((c as f64 + 0.5) * s as f64, (r as f64 + 0.5) * s as f64)
            })
            .collect();
        let descriptors = (0..n * d).map(|k| if k % d == 0 { 1.0 } else { 0.0 }).collect();
        ImportedPatches {
            patch_size: s,
            dim: d,
            positions,
            areas: vec![1.0; n],
            descriptors,
        }
    }

    #[test]
    fn two_hundred_byte_example() {
        let patches = fixture(2, 8, 32);
        let bytes = encode(&patches);
        assert_eq!(bytes.len(), 200);
        assert_eq!(file_len(4, 8), 200);
        let back = parse(Path::new("x.desc"), &bytes).unwrap();
        assert_eq!((back.len(), back.dim, back.patch_size), (4, 8, 32));
        assert_eq!(back, patches);
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&fixture(1, 3, 16));
        assert_eq!(&bytes[..8], b"PATSDESC");
        assert_eq!(&bytes[8..24], &[1, 0, 0, 0, 1, 0, 0, 0, 3, 0, 0, 0, 16, 0, 0, 0]);
        assert_eq!(&bytes[24..28], &8.0f32.to_le_bytes());
    }

    #[test]
    fn rejects_damage() {
        let p = Path::new("bad.desc");
        let good = encode(&fixture(2, 4, 32));
        let mut magic = good.clone();
        magic[0] = b'X';
        assert!(matches!(parse(p, &magic), Err(Error::Format { offset: 0, .. })));
        let mut version = good.clone();
        version[8] = 2;
        assert!(matches!(parse(p, &version), Err(Error::Format { offset: 8, .. })));
        assert!(matches!(parse(p, &good[..good.len() - 1]), Err(Error::Format { .. })));
        let mut long = good.clone();
        long.push(0);
        assert!(matches!(parse(p, &long), Err(Error::Format { .. })));
        let mut nan = good.clone();
        nan[24..28].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(parse(p, &nan), Err(Error::Format { offset: 24, .. })));
        assert!(matches!(parse(p, &good[..10]), Err(Error::Format { .. })));
    }

    #[test]
    fn grid_check() {
        let grid = PatchGrid::dense(32, 2, 2, 1, Point::default(), 1.0);
        let p = Path::new("f.desc");
        assert!(check_grid(p, &fixture(2, 4, 32), &grid).is_ok());
        let err = check_grid(p, &fixture(3, 4, 32), &grid).unwrap_err();
        assert!(err.to_string().contains("f.desc"));
        assert!(check_grid(p, &fixture(2, 4, 16), &grid).is_err());
        let mut moved = fixture(2, 4, 32);
        moved.positions[1].x += 1.0;
        assert!(check_grid(p, &moved, &grid).is_err());
    }
}
