//! Token spuriosity indices.
//!
//! A-TSI is the mean score outside the region over the mean score inside;
//! M-TSI is the maximum outside over the maximum inside. Values above 1 mean
//! tokens outside the region drive the prediction more than those inside.

use crate::grid::{GridError, TokenPartition};
use crate::influence::{ranked_indices, InfluenceError, InfluenceMap, ScoreKind};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("score map grid does not match partition grid")]
    GridMismatch,
    #[error("token count {k} must be in 1..{n_tokens}")]
    BadCount { k: usize, n_tokens: usize },
    #[error("expected an attention map, got {0}")]
    WrongKind(ScoreKind),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// A ratio that may be degenerate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TsiValue {
    Finite(f64),
    /// Inside statistic is zero while the outside one is positive.
    Infinite,
    /// Both statistics are zero, or one side of the partition is empty.
    Undefined,
}

impl TsiValue {
    pub fn finite(&self) -> Option<f64> {
        match *self {
            TsiValue::Finite(v) => Some(v),
            _ => None,
        }
    }

    pub fn flag(&self) -> TsiFlag {
        match self {
            TsiValue::Finite(_) => TsiFlag::Finite,
            TsiValue::Infinite => TsiFlag::Infinite,
            TsiValue::Undefined => TsiFlag::Undefined,
        }
    }

    fn ratio(outside: f64, inside: f64) -> Self {
        match (outside > 0.0, inside > 0.0) {
            (_, true) => TsiValue::Finite(outside / inside),
            (true, false) => TsiValue::Infinite,
            (false, false) => TsiValue::Undefined,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TsiFlag {
    Finite,
    Infinite,
    Undefined,
}

impl TsiFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            TsiFlag::Finite => "finite",
            TsiFlag::Infinite => "infinite",
            TsiFlag::Undefined => "undefined",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsiScores {
    pub a_tsi: TsiValue,
    pub m_tsi: TsiValue,
}

/// Which of the two indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "M-TSI")]
    MTsi,
    #[serde(rename = "A-TSI")]
    ATsi,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::MTsi, Metric::ATsi];

    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::MTsi => "M-TSI",
            Metric::ATsi => "A-TSI",
        }
    }
}

impl TsiScores {
    pub fn get(&self, metric: Metric) -> TsiValue {
        match metric {
            Metric::ATsi => self.a_tsi,
            Metric::MTsi => self.m_tsi,
        }
    }
}

type Sides = Option<(Vec<f64>, Vec<f64>)>;

fn sides<'a>(m: &'a InfluenceMap, part: &'a TokenPartition) -> Result<Sides, MetricError> {
    if m.grid != *part.grid() || m.scores.len() != part.grid().n_tokens() {
        return Err(MetricError::GridMismatch);
    }
    if part.b_in().is_empty() || part.b_out().is_empty() {
        return Ok(None);
    }
    let inside = part.b_in().iter().map(|&k| m.scores[k]).collect();
    let outside = part.b_out().iter().map(|&k| m.scores[k]).collect();
    Ok(Some((inside, outside)))
}

/// Summed in ascending order so any reordering of a side gives the same bits.
fn mean(xs: &[f64]) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.iter().sum::<f64>() / xs.len() as f64
}

fn max(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Mean score over `b_out` divided by mean score over `b_in`.
pub fn a_tsi(m: &InfluenceMap, part: &TokenPartition) -> Result<TsiValue, MetricError> {
    Ok(match sides(m, part)? {
        Some((inside, outside)) => TsiValue::ratio(mean(&outside), mean(&inside)),
        None => TsiValue::Undefined,
    })
}

/// Max score over `b_out` divided by max score over `b_in`.
pub fn m_tsi(m: &InfluenceMap, part: &TokenPartition) -> Result<TsiValue, MetricError> {
    Ok(match sides(m, part)? {
        Some((inside, outside)) => TsiValue::ratio(max(&outside), max(&inside)),
        None => TsiValue::Undefined,
    })
}

pub fn tsi_scores(m: &InfluenceMap, part: &TokenPartition) -> Result<TsiScores, MetricError> {
    Ok(TsiScores {
        a_tsi: a_tsi(m, part)?,
        m_tsi: m_tsi(m, part)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    CoreDominant,
    Balanced,
    Spurious,
}

/// Compare against exactly 1. Undefined values have no category.
pub fn interpret(value: TsiValue) -> Option<Category> {
    match value {
        TsiValue::Finite(v) if v < 1.0 => Some(Category::CoreDominant),
        TsiValue::Finite(1.0) => Some(Category::Balanced),
        TsiValue::Finite(v) if v > 1.0 => Some(Category::Spurious),
        TsiValue::Finite(_) => None,
        TsiValue::Infinite => Some(Category::Spurious),
        TsiValue::Undefined => None,
    }
}

/// Region made of the `k` highest-attention tokens (ties to the lower index).
pub fn attention_topk_partition(att: &InfluenceMap, k: usize) -> Result<TokenPartition, MetricError> {
    if att.kind != ScoreKind::Attention {
        return Err(MetricError::WrongKind(att.kind));
    }
    let n_tokens = att.scores.len();
    if k == 0 || k >= n_tokens {
        return Err(MetricError::BadCount { k, n_tokens });
    }
    let top = ranked_indices(&att.scores, k).map_err(|e| match e {
        InfluenceError::BadCount { .. } => MetricError::BadCount { k, n_tokens },
        _ => unreachable!("ranking only fails on counts"),
    })?;
    Ok(TokenPartition::from_indices(att.grid, top)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TokenGrid;

    fn map_2x2(scores: [f64; 4], kind: ScoreKind) -> InfluenceMap {
        InfluenceMap {
            image_id: "i".into(),
            model_id: "m".into(),
            target_class: 0,
            base_confidence: 0.9,
            scores: scores.to_vec(),
            kind,
            grid: TokenGrid::new(2, 2, 1).unwrap(),
        }
    }

    fn part(inside: &[usize]) -> TokenPartition {
        TokenPartition::from_indices(TokenGrid::new(2, 2, 1).unwrap(), inside.iter().copied()).unwrap()
    }

    #[test]
    fn equal_scores_give_one() {
        let m = map_2x2([0.3; 4], ScoreKind::Influence);
        let s = tsi_scores(&m, &part(&[0])).unwrap();
        assert_eq!(s.a_tsi, TsiValue::Finite(1.0));
        assert_eq!(s.m_tsi, TsiValue::Finite(1.0));
    }

    #[test]
    fn hand_example() {
        // inside tokens 0, 1 = [0.2, 0.4]; outside 2, 3 = [0.1, 0.5]
        let m = map_2x2([0.2, 0.4, 0.1, 0.5], ScoreKind::Influence);
        let p = part(&[0, 1]);
        let a = a_tsi(&m, &p).unwrap().finite().unwrap();
        assert!((a - 1.0).abs() < 1e-15);
        assert_eq!(m_tsi(&m, &p).unwrap(), TsiValue::Finite(0.5 / 0.4));
    }

    #[test]
    fn zero_outside_gives_zero() {
        let m = map_2x2([0.2, 0.0, 0.0, 0.0], ScoreKind::Influence);
        let s = tsi_scores(&m, &part(&[0, 1])).unwrap();
        assert_eq!(s.a_tsi, TsiValue::Finite(0.0));
        assert_eq!(s.m_tsi, TsiValue::Finite(0.0));
    }

    #[test]
    fn flags() {
        let m = map_2x2([0.0, 0.0, 0.3, 0.0], ScoreKind::Influence);
        assert_eq!(m_tsi(&m, &part(&[0, 1])).unwrap(), TsiValue::Infinite);
        assert_eq!(a_tsi(&m, &part(&[0, 1])).unwrap(), TsiValue::Infinite);
        let zero = map_2x2([0.0; 4], ScoreKind::Influence);
        assert_eq!(m_tsi(&zero, &part(&[0])).unwrap(), TsiValue::Undefined);
        let m = map_2x2([0.1, 0.2, 0.3, 0.4], ScoreKind::Influence);
        assert_eq!(a_tsi(&m, &part(&[0, 1, 2, 3])).unwrap(), TsiValue::Undefined);
        assert_eq!(m_tsi(&m, &part(&[])).unwrap(), TsiValue::Undefined);
    }

    #[test]
    fn grid_mismatch() {
        let m = map_2x2([0.1; 4], ScoreKind::Influence);
        let other = TokenPartition::from_indices(TokenGrid::new(4, 1, 1).unwrap(), [0]).unwrap();
        assert_eq!(a_tsi(&m, &other), Err(MetricError::GridMismatch));
    }

    #[test]
    fn interpretation() {
        assert_eq!(interpret(TsiValue::Finite(0.14)), Some(Category::CoreDominant));
        assert_eq!(interpret(TsiValue::Finite(1.0)), Some(Category::Balanced));
        assert_eq!(interpret(TsiValue::Finite(5.85)), Some(Category::Spurious));
        assert_eq!(interpret(TsiValue::Infinite), Some(Category::Spurious));
        assert_eq!(interpret(TsiValue::Undefined), None);
    }

    #[test]
    fn attention_partition() {
        let att = map_2x2([0.4, 0.1, 0.3, 0.2], ScoreKind::Attention);
        assert_eq!(attention_topk_partition(&att, 2).unwrap().b_in(), &[0, 2]);
        assert_eq!(attention_topk_partition(&att, 3).unwrap().b_out(), &[1]);
        assert_eq!(
            attention_topk_partition(&att, 4),
            Err(MetricError::BadCount { k: 4, n_tokens: 4 })
        );
        assert!(attention_topk_partition(&att, 0).is_err());
        let inf = map_2x2([0.4, 0.1, 0.3, 0.2], ScoreKind::Influence);
        assert_eq!(
            attention_topk_partition(&inf, 2),
            Err(MetricError::WrongKind(ScoreKind::Influence))
        );
    }

    #[test]
    fn uniform_attention_takes_lowest_indices() {
        let att = InfluenceMap {
            scores: vec![1.0 / 16.0; 16],
            grid: TokenGrid::new(4, 4, 1).unwrap(),
            ..map_2x2([0.0; 4], ScoreKind::Attention)
        };
        assert_eq!(attention_topk_partition(&att, 5).unwrap().b_in(), &[0, 1, 2, 3, 4]);
    }
}
