//! JSONL corpus manifests.
//!
//! The first non-empty line is a header `{"model_ids": [...]}`; every other
//! line is one image:
//!
//! ```text
//! {"image_id": "...", "true_class": "...", "annotation_path": "a.xml" | "boxes": [[x0, y0, x1, y1], ...],
//!  "predictions": [{"model_id": "...", "predicted_class": "...", "confidence": 0.9}],
//!  "width": 224, "height": 224, "image_path": "img.ppm", "signal_tokens": [3]}
//! ```
//!
//! Inline boxes use the half-open 0-based convention; `image_path` and
//! `signal_tokens` are optional.

use super::{parse_voc_xml, Corpus, ImageRecord, ModelPrediction, VocError};
use crate::grid::{BoundingBox, TokenGrid};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestHeader {
    pub model_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestPrediction {
    pub model_id: String,
    pub predicted_class: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub image_id: String,
    pub true_class: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boxes: Option<Vec<[i64; 4]>>,
    pub predictions: Vec<ManifestPrediction>,
    pub width: u32,
    pub height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal_tokens: Option<Vec<usize>>,
}

/// Resolves `annotation_path` entries to document bytes.
pub trait AnnotationSource {
    /// `None` when the path does not resolve.
    fn fetch(&self, path: &str) -> Option<Vec<u8>>;
}

/// Annotations stored as files under a base directory.
#[derive(Debug, Clone)]
pub struct DirAnnotations {
    pub base: PathBuf,
}

impl DirAnnotations {
    pub fn new(base: impl Into<PathBuf>) -> Self {
        Self { base: base.into() }
    }
}

impl AnnotationSource for DirAnnotations {
    fn fetch(&self, path: &str) -> Option<Vec<u8>> {
        std::fs::read(self.base.join(path)).ok()
    }
}

#[derive(Debug, Clone, Default)]
pub struct MemoryAnnotations(pub BTreeMap<String, Vec<u8>>);

impl AnnotationSource for MemoryAnnotations {
    fn fetch(&self, path: &str) -> Option<Vec<u8>> {
        self.0.get(path).cloned()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorpusErrorKind {
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("prediction for unknown model id {0:?}")]
    UnknownModelId(String),
    #[error("annotation {0:?} not found")]
    DanglingAnnotation(String),
    #[error("annotation {path:?}: {source}")]
    Annotation { path: String, source: VocError },
    #[error("read failed: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {kind}")]
pub struct CorpusError {
    pub line: usize,
    pub kind: CorpusErrorKind,
}

/// Every rejected line, in input order.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{} manifest line(s) rejected; first: {}", .errors.len(), .errors[0])]
pub struct CorpusLoadError {
    pub errors: Vec<CorpusError>,
}

fn schema(msg: impl Into<String>) -> CorpusErrorKind {
    CorpusErrorKind::SchemaViolation(msg.into())
}

fn convert_record(
    raw: ManifestRecord,
    model_ids: &[String],
    annotations: &dyn AnnotationSource,
    patch_size: u32,
) -> Result<ImageRecord, CorpusErrorKind> {
    let grid = TokenGrid::new(raw.width, raw.height, patch_size).map_err(|e| schema(e.to_string()))?;

    let boxes = match (&raw.annotation_path, &raw.boxes) {
        (Some(_), Some(_)) => return Err(schema("both annotation_path and boxes given")),
        (Some(path), None) => {
            let bytes = annotations
                .fetch(path)
                .ok_or_else(|| CorpusErrorKind::DanglingAnnotation(path.clone()))?;
            parse_voc_xml(&bytes)
                .map_err(|source| CorpusErrorKind::Annotation {
                    path: path.clone(),
                    source,
                })?
                .1
        }
        (None, Some(inline)) => inline
            .iter()
            .map(|&[x0, y0, x1, y1]| BoundingBox::new(x0, y0, x1, y1).map_err(|e| schema(e.to_string())))
            .collect::<Result<_, _>>()?,
        (None, None) => Vec::new(),
    };

    let mut seen = BTreeSet::new();
    let mut predictions = Vec::with_capacity(raw.predictions.len());
    for p in raw.predictions {
        if !model_ids.contains(&p.model_id) {
            return Err(CorpusErrorKind::UnknownModelId(p.model_id));
        }
        if !seen.insert(p.model_id.clone()) {
            return Err(schema(format!("duplicate prediction for {:?}", p.model_id)));
        }
        if !(0.0..=1.0).contains(&p.confidence) {
            return Err(schema(format!("confidence {} outside [0, 1]", p.confidence)));
        }
        predictions.push(ModelPrediction {
            correct: p.predicted_class == raw.true_class,
            model_id: p.model_id,
            predicted_class: p.predicted_class,
            confidence: p.confidence,
        });
    }
    if let Some(missing) = model_ids.iter().find(|m| !seen.contains(*m)) {
        return Err(schema(format!("missing prediction for {missing:?}")));
    }
    // keep header order regardless of line order
    predictions.sort_by_key(|p| model_ids.iter().position(|m| *m == p.model_id));

    if let Some(signal) = &raw.signal_tokens {
        if let Some(&bad) = signal.iter().find(|&&k| k >= grid.n_tokens()) {
            return Err(schema(format!("signal token {bad} outside the grid")));
        }
    }

    Ok(ImageRecord {
        image_id: raw.image_id,
        true_class: raw.true_class,
        boxes,
        predictions,
        grid,
        image_path: raw.image_path,
        signal_tokens: raw.signal_tokens,
    })
}

/// Load and validate a manifest. All bad lines are reported together.
pub fn load_corpus<R: BufRead>(
    reader: R,
    annotations: &dyn AnnotationSource,
    patch_size: u32,
) -> Result<Corpus, CorpusLoadError> {
    let mut corpus = Corpus::default();
    let mut header_seen = false;
    let mut ids = BTreeSet::new();
    let mut errors = Vec::new();

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let mut reject = |kind| errors.push(CorpusError { line: line_no, kind });
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                reject(CorpusErrorKind::Io(e.to_string()));
                break;
            }
        };
        if line.trim().is_empty() {
            continue;
        }
        if !header_seen {
            header_seen = true;
            match serde_json::from_str::<ManifestHeader>(&line) {
                Ok(h) => {
                    let unique: BTreeSet<_> = h.model_ids.iter().collect();
                    if unique.len() != h.model_ids.len() || h.model_ids.is_empty() {
                        reject(schema("header model_ids must be non-empty and unique"));
                        break;
                    }
                    corpus.model_ids = h.model_ids;
                }
                Err(e) => {
                    reject(schema(format!("bad header: {e}")));
                    break;
                }
            }
            continue;
        }
        let raw: ManifestRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                reject(schema(e.to_string()));
                continue;
            }
        };
        if !ids.insert(raw.image_id.clone()) {
            reject(schema(format!("duplicate image_id {:?}", raw.image_id)));
            continue;
        }
        match convert_record(raw, &corpus.model_ids, annotations, patch_size) {
            Ok(rec) => corpus.records.push(rec),
            Err(kind) => reject(kind),
        }
    }

    if errors.is_empty() {
        Ok(corpus)
    } else {
        Err(CorpusLoadError { errors })
    }
}

/// Write a manifest with inline boxes.
pub fn write_corpus<W: Write>(mut writer: W, corpus: &Corpus) -> std::io::Result<()> {
    if corpus.model_ids.is_empty() && corpus.records.is_empty() {
        return Ok(());
    }
    let header = ManifestHeader {
        model_ids: corpus.model_ids.clone(),
    };
    writeln!(writer, "{}", serde_json::to_string(&header)?)?;
    for rec in &corpus.records {
        let raw = ManifestRecord {
            image_id: rec.image_id.clone(),
            true_class: rec.true_class.clone(),
            annotation_path: None,
            boxes: (!rec.boxes.is_empty())
                .then(|| rec.boxes.iter().map(|b| [b.x_min, b.y_min, b.x_max, b.y_max]).collect()),
            predictions: rec
                .predictions
                .iter()
                .map(|p| ManifestPrediction {
                    model_id: p.model_id.clone(),
                    predicted_class: p.predicted_class.clone(),
                    confidence: p.confidence,
                })
                .collect(),
            width: rec.grid.image_width(),
            height: rec.grid.image_height(),
            image_path: rec.image_path.clone(),
            signal_tokens: rec.signal_tokens.clone(),
        };
        writeln!(writer, "{}", serde_json::to_string(&raw)?)?;
    }
    Ok(())
}
