//! File-level drivers behind the `synth`, `match` and `eval` commands.

use std::fs;
use std::path::{Path, PathBuf};

use pats_core::{
    build_patch_grid, evaluate, generate_pair, AreaBackend, DescriptorBackend, EvalConfig, EvalReport,
    GroundTruthWarp, HierarchyInput, HierarchyOutput, WindowExecutor,
};

use crate::config::{AreaKind, DescriptorKind, RunConfig};
use crate::desc;
use crate::error::{Error, Result};
use crate::matches::{read_matches, MatchRecord};
use crate::pnm;
use crate::sidecar::{self, WarpSidecar};

pub const SOURCE_FILE: &str = "source.pgm";
pub const TARGET_FILE: &str = "target.pgm";
pub const WARP_FILE: &str = "warp.json";

/// Renders a synthetic pair into `dir` as 16-bit PGMs plus the warp sidecar.
pub fn synth(seed: u64, warp: &GroundTruthWarp, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let pair = generate_pair(seed, warp)?;
    pnm::write_image(&pair.source, &dir.join(SOURCE_FILE), u16::MAX)?;
    pnm::write_image(&pair.target, &dir.join(TARGET_FILE), u16::MAX)?;
    sidecar::write_sidecar(&WarpSidecar::new(warp, seed), &dir.join(WARP_FILE))
}

#[derive(Clone, Debug, Default)]
pub struct MatchRequest {
    pub source: PathBuf,
    pub target: PathBuf,
    pub source_desc: Option<PathBuf>,
    pub target_desc: Option<PathBuf>,
    /// Warp sidecar for ground-truth areas.
    pub warp: Option<PathBuf>,
    /// Where the config came from, for error messages.
    pub config_path: Option<PathBuf>,
    pub config: RunConfig,
}

pub struct MatchRun {
    pub output: HierarchyOutput,
    /// Finest-level matches with the source point inside the unpadded image.
    pub records: Vec<MatchRecord>,
    pub source_size: (usize, usize),
    pub target_size: (usize, usize),
}

fn config_error(req: &MatchRequest, message: &str) -> Error {
    Error::data(req.config_path.as_deref().unwrap_or(Path::new("<config>")), message)
}

pub fn run_match<E: WindowExecutor>(req: &MatchRequest, executor: &E) -> Result<MatchRun> {
    let cfg = &req.config;
    if let Err(e) = cfg.validate() {
        return Err(config_error(req, &e.to_string()));
    }
    let s = cfg.hierarchy.coarsest_patch_size();
    let source = pnm::load_image(&req.source, s)?;
    let target = pnm::load_image(&req.target, s)?;

    let mut input = HierarchyInput::new(&source.image, &target.image);
    input.source_extent = source.original_size;
    input.target_extent = target.original_size;

    let wants_files = cfg.descriptor_backend == DescriptorKind::File;
    if wants_files && (req.source_desc.is_none() || req.target_desc.is_none()) {
        return Err(config_error(req, "descriptor_backend \"file\" needs --desc-src and --desc-dst"));
    }
    let mut target_imported = None;
    if let Some(path) = &req.source_desc {
        let imported = desc::read_desc(path)?;
        desc::check_grid(path, &imported, &build_patch_grid(&source.image, s)?)?;
        input.source_descriptors = DescriptorBackend::File(imported);
    }
    if let Some(path) = &req.target_desc {
        let imported = desc::read_desc(path)?;
        desc::check_grid(path, &imported, &build_patch_grid(&target.image, s)?)?;
        if let DescriptorBackend::File(src) = &input.source_descriptors {
            if src.dim != imported.dim {
                return Err(Error::data(
                    path,
                    format!("descriptor dimension {} differs from the source file's {}", imported.dim, src.dim),
                ));
            }
        } else {
            return Err(Error::data(path, "--desc-dst needs --desc-src as well"));
        }
        input.target_descriptors = DescriptorBackend::File(imported.clone());
        target_imported = Some(imported);
    } else if req.source_desc.is_some() {
        return Err(Error::data(
            req.source_desc.as_deref().unwrap(),
            "--desc-src needs --desc-dst as well",
        ));
    }

    input.target_areas = match cfg.area_backend {
        AreaKind::Unit => AreaBackend::Unit,
        AreaKind::GroundTruth => {
            let Some(path) = &req.warp else {
                return Err(config_error(req, "area_backend \"ground_truth\" needs --warp"));
            };
            AreaBackend::GroundTruth {
                warp: sidecar::read_warp(path)?,
                max_area: 16.0,
            }
        }
        AreaKind::File => match target_imported {
            Some(imported) => AreaBackend::File(imported),
            None => return Err(config_error(req, "area_backend \"file\" needs --desc-dst")),
        },
    };

    let output = pats_core::run_hierarchy_with(&input, &cfg.pipeline(), executor)?;
    let (w, h) = source.original_size;
    let records = output
        .correspondences
        .matches
        .iter()
        .filter(|c| c.source_pos.x < w as f64 && c.source_pos.y < h as f64)
        .map(MatchRecord::from)
        .collect();
    Ok(MatchRun {
        output,
        records,
        source_size: source.original_size,
        target_size: target.original_size,
    })
}

pub fn run_eval(matches: &Path, warp: &Path, config: &EvalConfig) -> Result<EvalReport> {
    let records = read_matches(matches)?;
    let warp = sidecar::read_warp(warp)?;
    let corrs: Vec<_> = records.iter().enumerate().map(|(k, r)| r.to_correspondence(k)).collect();
    Ok(evaluate(&corrs, &warp, config))
}
