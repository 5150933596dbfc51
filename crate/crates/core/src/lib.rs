//! Patch area transportation for local feature matching.
//!
//! Images are tiled into square patches; every patch carries a position, an
//! area and a descriptor. Source patch areas are transported onto target
//! patches with entropic optimal transport (plus dustbins for content that has
//! no counterpart), the plan is turned into many-to-many correspondences with
//! a recovered scale factor, and matched windows are cropped, scale-aligned
//! and subdivided for the next, finer level.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the command line
//! and the thread-pool driver live in the `pats` crate.

#![no_std]
#![deny(rust_2018_idioms)]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod error;
mod math;

pub mod descriptors;
pub mod grid;
pub mod image;
pub mod matcher;
pub mod metrics;
pub mod ot;
pub mod subdivision;
pub mod synth;

pub use descriptors::{
    describe_patches, estimate_areas, AreaBackend, DescriptorBackend, HandcraftedParams, ImportedPatches,
    HANDCRAFTED_DIM,
};
pub use error::{Error, Result};
pub use grid::{build_patch_grid, BBox, PatchFlags, PatchGrid, Point};
pub use image::Image;
pub use matcher::{
    argmax_target, extract_correspondence, flood_region, match_grids, Correspondence, CorrespondenceSet,
    GridMatching, MatcherConfig, Outcome, UnmatchedReason, Warning,
};
pub use metrics::{
    concentration_loss, evaluate, inlier_loss, outlier_loss, split_inlier_outlier, EvalConfig, EvalReport,
    GtPair, LossConfig, LossReport, Split,
};
pub use ot::{cost_matrix, solve_transport, CostMatrix, SinkhornConfig, TransportPlan};
pub use subdivision::{
    area_expectation, crop_and_resize, run_hierarchy, run_hierarchy_with, scale_factor, subdivide,
    trim_subpatches, HierarchyConfig, HierarchyInput, HierarchyOutput, LevelResult, LevelSpec, PipelineConfig,
    Sequential, SubpatchCandidate, Trimmed, WindowExecutor, WindowGeometry, WindowPair,
};
pub use synth::{generate_pair, ground_truth_position, texture, GroundTruthWarp, SynthPair, WarpKind};
