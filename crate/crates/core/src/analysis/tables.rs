use super::{mean_std, pearson, CorrelationResult};
use crate::dataset::{confidence_bin, coverage_bin, ConfidenceBin, CoverageBin, SubsetLabel};
use crate::influence::ScoreKind;
use crate::metrics::{Metric, TsiFlag, TsiScores, TsiValue};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Spuriosity scores of one (image, model, score source, region) with the
/// metadata the aggregates group on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsiSample {
    pub image_id: String,
    pub model_id: String,
    pub kind: ScoreKind,
    /// `"bbox"` for annotation regions, `"attn-top{k}"` for attention regions.
    pub region: String,
    pub class_label: String,
    pub subset: SubsetLabel,
    pub coverage: usize,
    /// The model's confidence in its own predicted class.
    pub confidence: f64,
    pub scores: TsiScores,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GroupBin {
    All,
    Coverage(CoverageBin),
    Confidence(ConfidenceBin),
}

impl GroupBin {
    pub fn label(&self) -> &'static str {
        match self {
            GroupBin::All => "All",
            GroupBin::Coverage(b) => b.label(),
            GroupBin::Confidence(b) => b.label(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupKey {
    pub metric: Metric,
    pub kind: ScoreKind,
    pub region: String,
    pub model_id: String,
    pub subset: SubsetLabel,
    pub bin: GroupBin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub key: GroupKey,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

/// Infinite and undefined samples left out of a group's mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonFiniteTally {
    pub key: GroupKey,
    pub infinite: usize,
    pub undefined: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TsiTable {
    pub rows: Vec<AggregateStats>,
    pub non_finite: Vec<NonFiniteTally>,
}

#[derive(Default)]
struct Bucket<'a> {
    values: Vec<(&'a str, f64)>,
    infinite: usize,
    undefined: usize,
}

fn key_for(s: &TsiSample, metric: Metric, bin: GroupBin) -> GroupKey {
    GroupKey {
        metric,
        kind: s.kind,
        region: s.region.clone(),
        model_id: s.model_id.clone(),
        subset: s.subset,
        bin,
    }
}

fn push<'a>(buckets: &mut BTreeMap<GroupKey, Bucket<'a>>, key: GroupKey, s: &'a TsiSample, value: TsiValue) {
    let bucket = buckets.entry(key).or_default();
    match value {
        TsiValue::Finite(v) => bucket.values.push((&s.image_id, v)),
        TsiValue::Infinite => bucket.infinite += 1,
        TsiValue::Undefined => bucket.undefined += 1,
    }
}

fn finish(buckets: BTreeMap<GroupKey, Bucket<'_>>) -> TsiTable {
    let mut table = TsiTable::default();
    for (key, mut bucket) in buckets {
        if bucket.infinite + bucket.undefined > 0 {
            table.non_finite.push(NonFiniteTally {
                key: key.clone(),
                infinite: bucket.infinite,
                undefined: bucket.undefined,
            });
        }
        if bucket.values.is_empty() {
            continue;
        }
        // fixed summation order
        bucket.values.sort_by(|a, b| a.0.cmp(b.0).then(a.1.total_cmp(&b.1)));
        let values: Vec<f64> = bucket.values.iter().map(|v| v.1).collect();
        let (mean, std) = mean_std(&values).expect("non-empty bucket");
        table.rows.push(AggregateStats {
            key,
            n: values.len(),
            mean,
            std,
        });
    }
    table
}

/// Mean/std per (metric, kind, region, model, subset) for all images and per
/// coverage bin. Large-box records are skipped; samples whose coverage falls
/// outside the bins only contribute to `All`.
pub fn grouped_tsi_table(samples: &[TsiSample], metrics: &[Metric]) -> TsiTable {
    let mut buckets = BTreeMap::new();
    for s in samples.iter().filter(|s| s.subset != SubsetLabel::Large) {
        for &metric in metrics {
            let value = s.scores.get(metric);
            push(&mut buckets, key_for(s, metric, GroupBin::All), s, value);
            if let Ok(bin) = coverage_bin(s.coverage) {
                push(&mut buckets, key_for(s, metric, GroupBin::Coverage(bin)), s, value);
            }
        }
    }
    finish(buckets)
}

/// Mean/std of misclassified-subset samples grouped by confidence quartile.
pub fn confidence_bin_table(samples: &[TsiSample], metrics: &[Metric]) -> TsiTable {
    let mut buckets = BTreeMap::new();
    for s in samples.iter().filter(|s| s.subset == SubsetLabel::Incorrect) {
        for &metric in metrics {
            let bin = GroupBin::Confidence(confidence_bin(s.confidence));
            push(&mut buckets, key_for(s, metric, bin), s, s.scores.get(metric));
        }
    }
    finish(buckets)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRankRow {
    pub class_label: String,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

/// Classes by descending mean of `metric` (ties by label), first `top_n` rows.
/// Non-finite values are left out.
pub fn class_ranking(samples: &[TsiSample], metric: Metric, top_n: usize) -> Vec<ClassRankRow> {
    let mut by_class: BTreeMap<&str, Vec<(&str, f64)>> = BTreeMap::new();
    for s in samples {
        if let TsiValue::Finite(v) = s.scores.get(metric) {
            by_class.entry(&s.class_label).or_default().push((&s.image_id, v));
        }
    }
    let mut rows: Vec<ClassRankRow> = by_class
        .into_iter()
        .map(|(class, mut vals)| {
            vals.sort_by(|a, b| a.0.cmp(b.0).then(a.1.total_cmp(&b.1)));
            let values: Vec<f64> = vals.into_iter().map(|v| v.1).collect();
            let (mean, std) = mean_std(&values).expect("non-empty class");
            ClassRankRow {
                class_label: class.to_owned(),
                n: values.len(),
                mean,
                std,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        b.mean
            .total_cmp(&a.mean)
            .then_with(|| a.class_label.cmp(&b.class_label))
    });
    rows.truncate(top_n);
    rows
}

/// Correlation within one group, with the pairs dropped for non-finite values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedCorrelation {
    pub subset: SubsetLabel,
    pub metric: Option<Metric>,
    pub model_id: String,
    pub dropped: usize,
    /// `None` when fewer than two pairs remain or a series is constant.
    pub result: Option<CorrelationResult>,
}

type PairKey = (SubsetLabel, Option<Metric>, String);
/// Paired (image, x, y) values per key, plus the count of dropped pairs.
type PairGroups = BTreeMap<PairKey, (Vec<(String, f64, f64)>, usize)>;

fn correlate_groups(groups: PairGroups) -> Vec<PairedCorrelation> {
    groups
        .into_iter()
        .map(|((subset, metric, model_id), (mut pairs, dropped))| {
            pairs.sort_by(|a, b| a.0.cmp(&b.0));
            let xs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let ys: Vec<f64> = pairs.iter().map(|p| p.2).collect();
            PairedCorrelation {
                subset,
                metric,
                model_id,
                dropped,
                result: pearson(&xs, &ys).ok(),
            }
        })
        .collect()
}

/// Pearson correlation between the same metric computed from two score
/// sources (or two region definitions), per subset, metric and model.
/// Samples pair on `(image_id, model_id)`; unpaired samples are ignored.
pub fn proxy_correlation_study(a: &[TsiSample], b: &[TsiSample]) -> Vec<PairedCorrelation> {
    let lookup: BTreeMap<(&str, &str), &TsiSample> = b
        .iter()
        .map(|s| ((s.image_id.as_str(), s.model_id.as_str()), s))
        .collect();
    let mut groups: PairGroups = BTreeMap::new();
    for sa in a {
        let Some(sb) = lookup.get(&(sa.image_id.as_str(), sa.model_id.as_str())) else {
            continue;
        };
        for metric in Metric::ALL {
            let entry = groups
                .entry((sa.subset, Some(metric), sa.model_id.clone()))
                .or_default();
            match (sa.scores.get(metric), sb.scores.get(metric)) {
                (TsiValue::Finite(x), TsiValue::Finite(y)) => entry.0.push((sa.image_id.clone(), x, y)),
                _ => entry.1 += 1,
            }
        }
    }
    correlate_groups(groups)
}

/// Pearson correlation between M-TSI (x) and A-TSI (y) per subset and model.
pub fn metric_correlation(samples: &[TsiSample]) -> Vec<PairedCorrelation> {
    let mut groups: PairGroups = BTreeMap::new();
    for s in samples {
        let entry = groups.entry((s.subset, None, s.model_id.clone())).or_default();
        match (s.scores.m_tsi, s.scores.a_tsi) {
            (TsiValue::Finite(m), TsiValue::Finite(a)) => entry.0.push((s.image_id.clone(), m, a)),
            _ => entry.1 += 1,
        }
    }
    correlate_groups(groups)
}

impl TsiSample {
    pub fn flags(&self) -> (TsiFlag, TsiFlag) {
        (self.scores.a_tsi.flag(), self.scores.m_tsi.flag())
    }
}
