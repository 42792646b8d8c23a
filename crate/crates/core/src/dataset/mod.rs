//! Annotated image corpora, the large-box / correct / incorrect subset split,
//! and the coverage and confidence bins used for grouping.

mod manifest;
mod voc;

pub use manifest::{
    load_corpus, write_corpus, AnnotationSource, CorpusError, CorpusErrorKind, CorpusLoadError, DirAnnotations,
    ManifestHeader, ManifestPrediction, ManifestRecord, MemoryAnnotations,
};
pub use voc::{parse_voc_xml, write_voc_xml, VocError};

use crate::grid::{bbox_to_partition_with, BoundingBox, GridError, OverlapRule, TokenGrid};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelPrediction {
    pub model_id: String,
    pub predicted_class: String,
    pub confidence: f64,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub image_id: String,
    pub true_class: String,
    pub boxes: Vec<BoundingBox>,
    pub predictions: Vec<ModelPrediction>,
    pub grid: TokenGrid,
    /// Pixel source for predictors that need one, relative to the manifest.
    pub image_path: Option<String>,
    /// Tokens carrying the planted signal, for synthetic corpora.
    pub signal_tokens: Option<Vec<usize>>,
}

impl ImageRecord {
    pub fn prediction(&self, model_id: &str) -> Option<&ModelPrediction> {
        self.predictions.iter().find(|p| p.model_id == model_id)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub model_ids: Vec<String>,
    pub records: Vec<ImageRecord>,
}

impl Corpus {
    pub fn record(&self, image_id: &str) -> Option<&ImageRecord> {
        self.records.iter().find(|r| r.image_id == image_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SubsetLabel {
    /// Box covers most of the image; excluded from spuriosity analysis.
    #[serde(rename = "D_L")]
    Large,
    /// Correctly classified by every model.
    #[serde(rename = "D_C")]
    Correct,
    /// Misclassified by at least one model.
    #[serde(rename = "D_I")]
    Incorrect,
}

impl SubsetLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            SubsetLabel::Large => "D_L",
            SubsetLabel::Correct => "D_C",
            SubsetLabel::Incorrect => "D_I",
        }
    }
}

impl fmt::Display for SubsetLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Coverage threshold as an exact fraction of the token count: a record is
/// large-box when `coverage / n_tokens > numerator / denominator`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CoverageThreshold {
    pub numerator: u32,
    pub denominator: u32,
}

impl Default for CoverageThreshold {
    fn default() -> Self {
        Self {
            numerator: 160,
            denominator: 196,
        }
    }
}

impl CoverageThreshold {
    pub fn new(numerator: u32, denominator: u32) -> Result<Self, DatasetError> {
        if denominator == 0 || numerator > denominator {
            return Err(DatasetError::BadThreshold(format!("{numerator}/{denominator}")));
        }
        Ok(Self { numerator, denominator })
    }

    pub fn exceeded_by(&self, coverage: usize, n_tokens: usize) -> bool {
        coverage as u128 * self.denominator as u128 > self.numerator as u128 * n_tokens as u128
    }
}

impl fmt::Display for CoverageThreshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numerator, self.denominator)
    }
}

impl std::str::FromStr for CoverageThreshold {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DatasetError::BadThreshold(s.to_owned());
        let (n, d) = s.split_once('/').ok_or_else(bad)?;
        let n = n.trim().parse().map_err(|_| bad())?;
        let d = d.trim().parse().map_err(|_| bad())?;
        Self::new(n, d)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PartitionConfig {
    pub overlap: OverlapRule,
    pub threshold: CoverageThreshold,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("coverage {0} outside the 1-160 token bins")]
    OutOfRange(usize),
    #[error("bad coverage threshold {0:?}; expected N/D with N <= D")]
    BadThreshold(String),
}

/// Number of tokens the record's boxes cover under `config`.
pub fn record_coverage(rec: &ImageRecord, config: &PartitionConfig) -> Result<usize, DatasetError> {
    Ok(bbox_to_partition_with(&rec.grid, &rec.boxes, config.overlap)?.n_in())
}

/// Large-box records first; then all-correct versus any-incorrect.
pub fn assign_subset(rec: &ImageRecord, config: &PartitionConfig) -> Result<SubsetLabel, DatasetError> {
    let coverage = record_coverage(rec, config)?;
    Ok(subset_for(
        coverage,
        rec.grid.n_tokens(),
        rec.predictions.iter().all(|p| p.correct),
        config,
    ))
}

pub(crate) fn subset_for(coverage: usize, n_tokens: usize, all_correct: bool, config: &PartitionConfig) -> SubsetLabel {
    if config.threshold.exceeded_by(coverage, n_tokens) {
        SubsetLabel::Large
    } else if all_correct {
        SubsetLabel::Correct
    } else {
        SubsetLabel::Incorrect
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CoverageBin {
    #[serde(rename = "1-40")]
    Upto40,
    #[serde(rename = "41-80")]
    Upto80,
    #[serde(rename = "81-120")]
    Upto120,
    #[serde(rename = "121-160")]
    Upto160,
}

impl CoverageBin {
    pub const ALL: [CoverageBin; 4] = [
        CoverageBin::Upto40,
        CoverageBin::Upto80,
        CoverageBin::Upto120,
        CoverageBin::Upto160,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            CoverageBin::Upto40 => "1-40",
            CoverageBin::Upto80 => "41-80",
            CoverageBin::Upto120 => "81-120",
            CoverageBin::Upto160 => "121-160",
        }
    }

    /// Inclusive token range.
    pub fn range(&self) -> (usize, usize) {
        match self {
            CoverageBin::Upto40 => (1, 40),
            CoverageBin::Upto80 => (41, 80),
            CoverageBin::Upto120 => (81, 120),
            CoverageBin::Upto160 => (121, 160),
        }
    }
}

pub fn coverage_bin(n_in: usize) -> Result<CoverageBin, DatasetError> {
    match n_in {
        1..=40 => Ok(CoverageBin::Upto40),
        41..=80 => Ok(CoverageBin::Upto80),
        81..=120 => Ok(CoverageBin::Upto120),
        121..=160 => Ok(CoverageBin::Upto160),
        _ => Err(DatasetError::OutOfRange(n_in)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConfidenceBin {
    #[serde(rename = "0-25%")]
    Q1,
    #[serde(rename = "25-50%")]
    Q2,
    #[serde(rename = "50-75%")]
    Q3,
    #[serde(rename = "75-100%")]
    Q4,
}

impl ConfidenceBin {
    pub const ALL: [ConfidenceBin; 4] = [
        ConfidenceBin::Q1,
        ConfidenceBin::Q2,
        ConfidenceBin::Q3,
        ConfidenceBin::Q4,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            ConfidenceBin::Q1 => "0-25%",
            ConfidenceBin::Q2 => "25-50%",
            ConfidenceBin::Q3 => "50-75%",
            ConfidenceBin::Q4 => "75-100%",
        }
    }
}

/// Quartile of a confidence in `[0, 1]`. Boundaries go to the upper bin;
/// 1.0 stays in the top bin.
pub fn confidence_bin(confidence: f64) -> ConfidenceBin {
    if confidence < 0.25 {
        ConfidenceBin::Q1
    } else if confidence < 0.5 {
        ConfidenceBin::Q2
    } else if confidence < 0.75 {
        ConfidenceBin::Q3
    } else {
        ConfidenceBin::Q4
    }
}
