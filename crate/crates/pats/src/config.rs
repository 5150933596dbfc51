//! Run configuration, read from and written to JSON.

use std::fs;
use std::path::Path;

use pats_core::{HandcraftedParams, HierarchyConfig, LossConfig, MatcherConfig, PipelineConfig, SinkhornConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescriptorKind {
    #[default]
    Handcrafted,
    /// PATS-DESC files given on the command line.
    File,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AreaKind {
    #[default]
    Unit,
    /// Jacobian of the warp given with `--warp`.
    GroundTruth,
    /// Areas stored in the target PATS-DESC file.
    File,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub hierarchy: HierarchyConfig,
    pub sinkhorn: SinkhornConfig,
    pub matcher: MatcherConfig,
    pub loss: LossConfig,
    pub descriptor: HandcraftedParams,
    pub descriptor_backend: DescriptorKind,
    pub area_backend: AreaKind,
    pub seed: u64,
}

impl RunConfig {
    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            hierarchy: self.hierarchy.clone(),
            sinkhorn: self.sinkhorn,
            matcher: self.matcher,
            descriptor: self.descriptor,
        }
    }

    pub fn validate(&self) -> pats_core::Result<()> {
        self.pipeline().validate()?;
        if !(self.loss.theta > 0.0 && self.loss.theta.is_finite()) {
            return Err(pats_core::Error::InvalidInput("loss theta must be positive".to_string()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs always serialize")
    }

    pub fn from_json(path: &Path, text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::json(path, e))?;
        cfg.validate().map_err(|e| Error::data(path, e.to_string()))?;
        Ok(cfg)
    }
}

pub fn read_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunConfig::from_json(path, &text)
}
