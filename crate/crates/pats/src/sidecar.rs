//! Warp sidecar written next to synthetic pairs, and the `--warp` spec
//! syntax of `pats synth`.

use std::fs;
use std::path::Path;

use pats_core::{GroundTruthWarp, WarpKind};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarpSidecar {
    pub warp_kind: WarpKind,
    pub matrix: [[f64; 3]; 3],
    pub seed: u64,
    /// Source image size `[W, H]`.
    pub size: [usize; 2],
    /// Target image size; the source size when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_size: Option<[usize; 2]>,
}

impl WarpSidecar {
    pub fn new(warp: &GroundTruthWarp, seed: u64) -> Self {
        let (s, t) = (warp.source_size(), warp.target_size());
        Self {
            warp_kind: warp.kind(),
            matrix: *warp.matrix(),
            seed,
            size: [s.0, s.1],
            target_size: (s != t).then_some([t.0, t.1]),
        }
    }

    pub fn warp(&self) -> pats_core::Result<GroundTruthWarp> {
        let source = (self.size[0], self.size[1]);
        let target = self.target_size.map_or(source, |t| (t[0], t[1]));
        GroundTruthWarp::from_matrix(self.warp_kind, self.matrix, source, target)
    }
}

pub fn read_sidecar(path: &Path) -> Result<WarpSidecar> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

pub fn read_warp(path: &Path) -> Result<GroundTruthWarp> {
    read_sidecar(path)?
        .warp()
        .map_err(|e| Error::data(path, e.to_string()))
}

pub fn write_sidecar(sidecar: &WarpSidecar, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(sidecar).expect("sidecars always serialize");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Parses `identity`, `scale:S`, `affine:a,b,tx,c,d,ty` or
/// `homography:h00,h01,...,h22`. Source and target share `size`.
pub fn parse_warp_spec(spec: &str, size: (usize, usize)) -> std::result::Result<GroundTruthWarp, String> {
    let (kind, args) = spec.split_once(':').unwrap_or((spec, ""));
    let nums: Vec<f64> = if args.is_empty() {
        Vec::new()
    } else {
        args.split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| format!("bad number {v:?} in warp spec")))
            .collect::<std::result::Result<_, _>>()?
    };
    let need = |n: usize| {
        if nums.len() == n {
            Ok(())
        } else {
            Err(format!("warp {kind:?} takes {n} numbers, got {}", nums.len()))
        }
    };
    let warp = match kind {
        "identity" => {
            need(0)?;
            Ok(GroundTruthWarp::identity(size, size))
        }
        "scale" => {
            need(1)?;
            GroundTruthWarp::uniform_scale(nums[0], size, size)
        }
        "affine" => {
            need(6)?;
            GroundTruthWarp::affine([[nums[0], nums[1], nums[2]], [nums[3], nums[4], nums[5]]], size, size)
        }
        "homography" => {
            need(9)?;
            GroundTruthWarp::homography(
                [[nums[0], nums[1], nums[2]], [nums[3], nums[4], nums[5]], [nums[6], nums[7], nums[8]]],
                size,
                size,
            )
        }
        other => return Err(format!("unknown warp kind {other:?}")),
    };
    warp.map_err(|e| e.to_string())
}
