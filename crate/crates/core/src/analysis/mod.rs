//! Corpus-level aggregates over per-image spuriosity scores.

mod masking;
mod tables;

pub use masking::{masking_comparison, MaskingCell, MaskingInput, ScoreSource};
pub use tables::{
    class_ranking, confidence_bin_table, grouped_tsi_table, metric_correlation, proxy_correlation_study,
    AggregateStats, ClassRankRow, GroupBin, GroupKey, NonFiniteTally, PairedCorrelation, TsiSample, TsiTable,
};

use crate::metrics::TsiValue;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("empty input")]
    EmptyInput,
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least two paired values, got {0}")]
    TooFew(usize),
    #[error("a series is constant; correlation undefined")]
    ConstantSeries,
    #[error("bad histogram bins: {0}")]
    BadBinSpec(String),
    #[error("score source {source_name:?} has no map for image {image_id:?}")]
    MissingScores { source_name: String, image_id: String },
    #[error(transparent)]
    Influence(#[from] crate::influence::InfluenceError),
}

/// Arithmetic mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> Result<(f64, f64), AnalysisError> {
    if values.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub n: usize,
    pub pearson_r: f64,
    pub r_squared: f64,
}

/// Product-moment correlation of paired samples.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<CorrelationResult, AnalysisError> {
    if xs.len() != ys.len() {
        return Err(AnalysisError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(AnalysisError::TooFew(xs.len()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(AnalysisError::ConstantSeries);
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    Ok(CorrelationResult {
        n: xs.len(),
        pearson_r: r,
        r_squared: r * r,
    })
}

/// Uniform bins over `[0, clamp)` plus a terminal `[clamp, inf)` bin that also
/// absorbs infinite values. Undefined values are tallied separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub clamp: f64,
    pub counts: Vec<usize>,
    pub overflow: usize,
    pub undefined: usize,
}

impl Histogram {
    /// Lower edge of interior bin `i` (also the upper edge of bin `i - 1`).
    pub fn edge(&self, i: usize) -> f64 {
        if i == self.counts.len() {
            self.clamp
        } else {
            i as f64 * self.bin_width
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum::<usize>() + self.overflow + self.undefined
    }

    fn bin_of(&self, v: f64) -> Option<usize> {
        if v >= self.clamp {
            return None;
        }
        let last = self.counts.len() - 1;
        let mut i = ((v / self.bin_width).floor().max(0.0) as usize).min(last);
        // settle on the computed edges so each value lands in [edge(i), edge(i + 1))
        while i < last && self.edge(i + 1) <= v {
            i += 1;
        }
        while i > 0 && self.edge(i) > v {
            i -= 1;
        }
        Some(i)
    }
}

pub fn clamped_histogram(values: &[TsiValue], bin_width: f64, clamp: f64) -> Result<Histogram, AnalysisError> {
    if !(bin_width > 0.0 && bin_width.is_finite() && clamp > 0.0 && clamp.is_finite()) {
        return Err(AnalysisError::BadBinSpec(format!(
            "bin width {bin_width} and clamp {clamp} must be positive"
        )));
    }
    let ratio = clamp / bin_width;
    let n_bins = ratio.round();
    if (ratio - n_bins).abs() > 1e-9 * n_bins.max(1.0) || !(1.0..=1e7).contains(&n_bins) {
        return Err(AnalysisError::BadBinSpec(format!(
            "clamp {clamp} is not a multiple of bin width {bin_width}"
        )));
    }
    let mut hist = Histogram {
        bin_width,
        clamp,
        counts: vec![0; n_bins as usize],
        overflow: 0,
        undefined: 0,
    };
    for v in values {
        match *v {
            TsiValue::Finite(x) => match hist.bin_of(x) {
                Some(i) => hist.counts[i] += 1,
                None => hist.overflow += 1,
            },
            TsiValue::Infinite => hist.overflow += 1,
            TsiValue::Undefined => hist.undefined += 1,
        }
    }
    Ok(hist)
}
