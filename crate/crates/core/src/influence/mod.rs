//! One-token-out influence maps.
//!
//! For a target class, `z_k = |y - y(-k)|` where `y` is the confidence on the
//! full token sequence and `y(-k)` the confidence with token `k` discarded.

mod records;

pub use records::{load_score_records, write_score_records, GridSpec, RecordError, RecordErrorKind, ScoreRecord};

use crate::grid::TokenGrid;
use crate::model::{predict, AttentionMap, ModelError, Predictor, TokenizedImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InfluenceError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("token count {n} must be in 1..={max}")]
    BadCount { n: usize, max: usize },
    #[error("discarding every token leaves nothing to evaluate")]
    EmptyRemainder,
    #[error("token {index} out of range for {n_tokens} tokens")]
    IndexOutOfRange { index: usize, n_tokens: usize },
    #[error("failed to build worker pool: {0}")]
    Pool(String),
}

/// Where a per-token score map came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Influence,
    Attention,
    Saliency,
}

impl ScoreKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScoreKind::Influence => "influence",
            ScoreKind::Attention => "attention",
            ScoreKind::Saliency => "saliency",
        }
    }
}

impl std::fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Nonnegative per-token scores for one (image, model, target class).
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceMap {
    pub image_id: String,
    pub model_id: String,
    pub target_class: usize,
    pub base_confidence: f64,
    pub scores: Vec<f64>,
    pub kind: ScoreKind,
    pub grid: TokenGrid,
}

impl InfluenceMap {
    pub fn n_tokens(&self) -> usize {
        self.scores.len()
    }

    /// Wrap a classification-token attention map as a score map.
    pub fn from_attention(att: &AttentionMap, target_class: usize, base_confidence: f64) -> Self {
        Self {
            image_id: att.image_id.clone(),
            model_id: att.model_id.clone(),
            target_class,
            base_confidence,
            scores: att.weights.clone(),
            kind: ScoreKind::Attention,
            grid: att.grid,
        }
    }
}

/// Influence map computed sequentially. Uses exactly `n_tokens + 1`
/// predictor evaluations.
pub fn compute_influence_map<P: Predictor + ?Sized>(
    p: &P,
    img: &TokenizedImage,
    target_class: usize,
) -> Result<InfluenceMap, InfluenceError> {
    let base = base_confidence(p, img, target_class)?;
    let scores = (0..img.n_tokens())
        .map(|k| Ok((base - discard_one(p, img, k, target_class)?).abs()))
        .collect::<Result<Vec<_>, InfluenceError>>()?;
    Ok(assemble(p, img, target_class, base, scores))
}

fn base_confidence<P: Predictor + ?Sized>(
    p: &P,
    img: &TokenizedImage,
    target_class: usize,
) -> Result<f64, InfluenceError> {
    check_class(p, target_class)?;
    Ok(predict(p, img, &img.all_tokens())?[target_class])
}

fn check_class<P: Predictor + ?Sized>(p: &P, class: usize) -> Result<(), InfluenceError> {
    if class >= p.n_classes() {
        return Err(ModelError::ClassOutOfRange {
            class,
            n_classes: p.n_classes(),
        }
        .into());
    }
    Ok(())
}

fn discard_one<P: Predictor + ?Sized>(
    p: &P,
    img: &TokenizedImage,
    k: usize,
    target_class: usize,
) -> Result<f64, InfluenceError> {
    let present: Vec<usize> = (0..img.n_tokens()).filter(|&i| i != k).collect();
    Ok(predict(p, img, &present)?[target_class])
}

fn assemble<P: Predictor + ?Sized>(
    p: &P,
    img: &TokenizedImage,
    target_class: usize,
    base_confidence: f64,
    scores: Vec<f64>,
) -> InfluenceMap {
    InfluenceMap {
        image_id: img.image_id.clone(),
        model_id: p.model_id().to_owned(),
        target_class,
        base_confidence,
        scores,
        kind: ScoreKind::Influence,
        grid: img.grid,
    }
}

/// Parallel influence computation over a fixed-size worker pool.
///
/// Each token's score lands in its own slot, so results do not depend on
/// the number of workers or on scheduling.
pub struct InfluenceEngine {
    pool: rayon::ThreadPool,
}

impl InfluenceEngine {
    pub fn new(workers: usize) -> Result<Self, InfluenceError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| InfluenceError::Pool(e.to_string()))?;
        Ok(Self { pool })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    pub fn influence_map<P: Predictor + ?Sized>(
        &self,
        p: &P,
        img: &TokenizedImage,
        target_class: usize,
    ) -> Result<InfluenceMap, InfluenceError> {
        let base = base_confidence(p, img, target_class)?;
        let mut scores = vec![0.0; img.n_tokens()];
        self.pool.install(|| {
            scores
                .par_iter_mut()
                .enumerate()
                .try_for_each(|(k, slot)| -> Result<(), InfluenceError> {
                    *slot = (base - discard_one(p, img, k, target_class)?).abs();
                    Ok(())
                })
        })?;
        Ok(assemble(p, img, target_class, base, scores))
    }

    /// Run `job` over `items` in the pool, returning results in input order.
    pub fn map_ordered<T, R, F>(&self, items: &[T], job: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        self.pool.install(|| items.par_iter().map(job).collect())
    }
}

/// The `n` highest-scoring token indices, descending; equal scores are
/// ordered by smaller index first.
pub fn top_n_tokens(m: &InfluenceMap, n: usize) -> Result<Vec<usize>, InfluenceError> {
    ranked_indices(&m.scores, n)
}

pub(crate) fn ranked_indices(scores: &[f64], n: usize) -> Result<Vec<usize>, InfluenceError> {
    if n == 0 || n > scores.len() {
        return Err(InfluenceError::BadCount { n, max: scores.len() });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(n);
    Ok(order)
}

/// Signed confidence change `y - y(discard)` for `target_class`; positive
/// means the confidence dropped.
pub fn mask_and_measure<P: Predictor + ?Sized>(
    p: &P,
    img: &TokenizedImage,
    discard: &[usize],
    target_class: usize,
) -> Result<f64, InfluenceError> {
    let n = img.n_tokens();
    let mut removed = vec![false; n];
    for &k in discard {
        if k >= n {
            return Err(InfluenceError::IndexOutOfRange { index: k, n_tokens: n });
        }
        removed[k] = true;
    }
    let present: Vec<usize> = (0..n).filter(|&k| !removed[k]).collect();
    if present.is_empty() {
        return Err(InfluenceError::EmptyRemainder);
    }
    let base = base_confidence(p, img, target_class)?;
    if present.len() == n {
        return Ok(0.0);
    }
    Ok(base - predict(p, img, &present)?[target_class])
}
