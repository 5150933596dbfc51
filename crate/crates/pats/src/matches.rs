//! Match files: JSON lines of `{"src":[x,y],"dst":[x,y],"scale":s,"conf":c,"level":l}`.

use std::fs;
use std::path::Path;

use pats_core::{BBox, Correspondence, Point};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchRecord {
    pub src: [f64; 2],
    pub dst: [f64; 2],
    pub scale: f64,
    pub conf: f64,
    pub level: usize,
}

impl From<&Correspondence> for MatchRecord {
    fn from(c: &Correspondence) -> Self {
        Self {
            src: [c.source_pos.x, c.source_pos.y],
            dst: [c.target_pos.x, c.target_pos.y],
            scale: c.scale,
            conf: c.confidence,
            level: c.level,
        }
    }
}

impl MatchRecord {
    pub fn source(&self) -> Point {
        Point::new(self.src[0], self.src[1])
    }

    pub fn target(&self) -> Point {
        Point::new(self.dst[0], self.dst[1])
    }

    /// A correspondence carrying only what the file stores; `index` becomes
    /// both the source index and the root.
    pub fn to_correspondence(&self, index: usize) -> Correspondence {
        Correspondence {
            source_index: index,
            source_pos: self.source(),
            target_pos: self.target(),
            bbox: BBox::cell(0, 0),
            scale: self.scale,
            confidence: self.conf,
            level: self.level,
            root: index,
            zero_area_weight: false,
        }
    }
}

pub fn encode_matches(records: &[MatchRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("match records always serialize"));
        out.push('\n');
    }
    out
}

pub fn write_matches(records: &[MatchRecord], path: &Path) -> Result<()> {
    fs::write(path, encode_matches(records)).map_err(|e| Error::io(path, e))
}

pub fn read_matches(path: &Path) -> Result<Vec<MatchRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: MatchRecord =
            serde_json::from_str(line).map_err(|e| Error::data(path, format!("line {}: {e}", k + 1)))?;
        out.push(rec);
    }
    Ok(out)
}
