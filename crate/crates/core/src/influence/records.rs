//! JSONL score records shared with external exporters.
//!
//! One object per line:
//! `{"image_id", "model_id", "kind", "target_class", "base_confidence",
//!   "grid": {"w", "h", "patch"}, "scores": [..]}`.
//! Lines holding a single `"provenance"` object are skipped on load.

use super::{InfluenceMap, ScoreKind};
use crate::grid::TokenGrid;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub w: u32,
    pub h: u32,
    pub patch: u32,
}

impl From<TokenGrid> for GridSpec {
    fn from(g: TokenGrid) -> Self {
        Self {
            w: g.image_width(),
            h: g.image_height(),
            patch: g.patch_size(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRecord {
    pub image_id: String,
    pub model_id: String,
    pub kind: ScoreKind,
    pub target_class: u64,
    pub base_confidence: f64,
    pub grid: GridSpec,
    pub scores: Vec<f64>,
}

impl From<&InfluenceMap> for ScoreRecord {
    fn from(m: &InfluenceMap) -> Self {
        Self {
            image_id: m.image_id.clone(),
            model_id: m.model_id.clone(),
            kind: m.kind,
            target_class: m.target_class as u64,
            base_confidence: m.base_confidence,
            grid: m.grid.into(),
            scores: m.scores.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecordErrorKind {
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("negative score at token {index}")]
    NegativeScore { index: usize },
    #[error("{got} scores for a grid of {expected} tokens")]
    LengthMismatch { got: usize, expected: usize },
    #[error("read failed: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {kind}")]
pub struct RecordError {
    pub line: usize,
    pub kind: RecordErrorKind,
}

impl ScoreRecord {
    pub fn into_map(self) -> Result<InfluenceMap, RecordErrorKind> {
        let schema = |msg: String| RecordErrorKind::SchemaViolation(msg);
        let grid = TokenGrid::new(self.grid.w, self.grid.h, self.grid.patch).map_err(|e| schema(e.to_string()))?;
        if self.scores.len() != grid.n_tokens() {
            return Err(RecordErrorKind::LengthMismatch {
                got: self.scores.len(),
                expected: grid.n_tokens(),
            });
        }
        if !(0.0..=1.0).contains(&self.base_confidence) {
            return Err(schema(format!(
                "base_confidence {} outside [0, 1]",
                self.base_confidence
            )));
        }
        for (index, &z) in self.scores.iter().enumerate() {
            if !z.is_finite() {
                return Err(schema(format!("non-finite score at token {index}")));
            }
            if z < 0.0 {
                return Err(RecordErrorKind::NegativeScore { index });
            }
            if self.kind == ScoreKind::Influence && z > 1.0 {
                return Err(schema(format!("influence score {z} above 1 at token {index}")));
            }
        }
        let target_class = usize::try_from(self.target_class).map_err(|_| schema("target_class too large".into()))?;
        Ok(InfluenceMap {
            image_id: self.image_id,
            model_id: self.model_id,
            target_class,
            base_confidence: self.base_confidence,
            scores: self.scores,
            kind: self.kind,
            grid,
        })
    }
}

fn is_provenance_line(value: &serde_json::Value) -> bool {
    value
        .as_object()
        .is_some_and(|o| o.len() == 1 && o.contains_key("provenance"))
}

/// Parse and validate every record in `reader`, failing on the first bad line.
pub fn load_score_records<R: BufRead>(reader: R) -> Result<Vec<InfluenceMap>, RecordError> {
    let mut maps = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let err = |kind| RecordError { line: line_no, kind };
        let line = line.map_err(|e| err(RecordErrorKind::Io(e.to_string())))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| err(RecordErrorKind::SchemaViolation(e.to_string())))?;
        if is_provenance_line(&value) {
            continue;
        }
        let record: ScoreRecord =
            serde_json::from_value(value).map_err(|e| err(RecordErrorKind::SchemaViolation(e.to_string())))?;
        maps.push(record.into_map().map_err(err)?);
    }
    Ok(maps)
}

/// Write one newline-terminated JSON object per map.
pub fn write_score_records<'a, W: Write>(
    mut writer: W,
    maps: impl IntoIterator<Item = &'a InfluenceMap>,
) -> std::io::Result<()> {
    for m in maps {
        let line = serde_json::to_string(&ScoreRecord::from(m))?;
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
