//! CSV tables built from TSI rows.

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use crate::output::{fmt_g6, load_tsi_rows, write_csv};
use std::collections::BTreeMap;
use std::path::Path;
use tsi_core::analysis::{
    clamped_histogram, class_ranking, confidence_bin_table, grouped_tsi_table, metric_correlation,
    proxy_correlation_study, AggregateStats, GroupKey, NonFiniteTally, PairedCorrelation, TsiSample,
};
use tsi_core::dataset::SubsetLabel;
use tsi_core::influence::ScoreKind;
use tsi_core::metrics::{Metric, TsiValue};

const STATS_HEADER: [&str; 9] = [
    "metric", "kind", "region", "model_id", "subset", "group", "n", "mean", "std",
];

fn key_cells(k: &GroupKey) -> Vec<String> {
    vec![
        k.metric.as_str().into(),
        k.kind.as_str().into(),
        k.region.clone(),
        k.model_id.clone(),
        k.subset.as_str().into(),
        k.bin.label().into(),
    ]
}

fn stats_rows(rows: &[AggregateStats]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            let mut cells = key_cells(&r.key);
            cells.extend([r.n.to_string(), fmt_g6(r.mean), fmt_g6(r.std)]);
            cells
        })
        .collect()
}

type SourceKey = (ScoreKind, String, String, SubsetLabel);

/// Samples grouped by (kind, region, model, subset).
fn by_source(samples: &[TsiSample]) -> BTreeMap<SourceKey, Vec<TsiSample>> {
    let mut groups: BTreeMap<SourceKey, Vec<TsiSample>> = BTreeMap::new();
    for s in samples {
        groups
            .entry((s.kind, s.region.clone(), s.model_id.clone(), s.subset))
            .or_default()
            .push(s.clone());
    }
    groups
}

pub fn aggregate(config: &PipelineConfig, tsi: &Path, out_dir: &Path) -> CliResult<()> {
    let samples = load_tsi_rows(tsi)?;

    let coverage = grouped_tsi_table(&samples, &Metric::ALL);
    write_csv(
        &out_dir.join("coverage_table.csv"),
        config,
        &STATS_HEADER,
        &stats_rows(&coverage.rows),
    )?;

    let confidence = confidence_bin_table(&samples, &Metric::ALL);
    write_csv(
        &out_dir.join("confidence_table.csv"),
        config,
        &STATS_HEADER,
        &stats_rows(&confidence.rows),
    )?;

    let mut tallies: Vec<&NonFiniteTally> = coverage.non_finite.iter().chain(&confidence.non_finite).collect();
    tallies.sort_by(|a, b| a.key.cmp(&b.key));
    let rows: Vec<Vec<String>> = tallies
        .iter()
        .map(|t| {
            let mut cells = key_cells(&t.key);
            cells.extend([t.infinite.to_string(), t.undefined.to_string()]);
            cells
        })
        .collect();
    write_csv(
        &out_dir.join("non_finite.csv"),
        config,
        &[
            "metric",
            "kind",
            "region",
            "model_id",
            "subset",
            "group",
            "infinite",
            "undefined",
        ],
        &rows,
    )?;

    let mut rank_rows = Vec::new();
    for ((kind, region, model_id, subset), group) in by_source(&samples) {
        if subset == SubsetLabel::Large {
            continue;
        }
        for (rank, r) in class_ranking(&group, Metric::MTsi, config.top_classes)
            .iter()
            .enumerate()
        {
            rank_rows.push(vec![
                Metric::MTsi.as_str().into(),
                kind.as_str().into(),
                region.clone(),
                model_id.clone(),
                subset.as_str().into(),
                (rank + 1).to_string(),
                r.class_label.clone(),
                r.n.to_string(),
                fmt_g6(r.mean),
                fmt_g6(r.std),
            ]);
        }
    }
    write_csv(
        &out_dir.join("class_ranking.csv"),
        config,
        &[
            "metric",
            "kind",
            "region",
            "model_id",
            "subset",
            "rank",
            "class_label",
            "n",
            "mean",
            "std",
        ],
        &rank_rows,
    )
}

pub fn hist(config: &PipelineConfig, tsi: &Path, out: &Path) -> CliResult<()> {
    let samples = load_tsi_rows(tsi)?;
    let mut rows = Vec::new();
    for ((kind, region, model_id, subset), group) in by_source(&samples) {
        for metric in Metric::ALL {
            let values: Vec<TsiValue> = group.iter().map(|s| s.scores.get(metric)).collect();
            let h = clamped_histogram(&values, config.bin_width, config.clamp).map_err(CliError::input)?;
            let prefix = [
                metric.as_str().to_owned(),
                kind.as_str().into(),
                region.clone(),
                model_id.clone(),
                subset.as_str().into(),
            ];
            let mut push = |lo: String, hi: String, count: usize| {
                let mut cells = prefix.to_vec();
                cells.extend([lo, hi, count.to_string()]);
                rows.push(cells);
            };
            for (i, &c) in h.counts.iter().enumerate() {
                push(fmt_g6(h.edge(i)), fmt_g6(h.edge(i + 1)), c);
            }
            push(fmt_g6(h.clamp), "inf".into(), h.overflow);
            push("undefined".into(), String::new(), h.undefined);
        }
    }
    write_csv(
        out,
        config,
        &[
            "metric", "kind", "region", "model_id", "subset", "bin_lo", "bin_hi", "count",
        ],
        &rows,
    )
}

fn correlation_cells(c: &PairedCorrelation) -> Vec<String> {
    let (n, r, r2) = match c.result {
        Some(res) => (res.n.to_string(), fmt_g6(res.pearson_r), fmt_g6(res.r_squared)),
        None => (String::new(), String::new(), String::new()),
    };
    vec![c.dropped.to_string(), n, r, r2]
}

/// Correlate every non-baseline source with (influence, bbox), and M-TSI with
/// A-TSI within each source.
pub fn compare(config: &PipelineConfig, tsi: &Path, out_dir: &Path) -> CliResult<()> {
    let samples = load_tsi_rows(tsi)?;
    let mut sources: BTreeMap<(ScoreKind, String), Vec<TsiSample>> = BTreeMap::new();
    for s in &samples {
        sources.entry((s.kind, s.region.clone())).or_default().push(s.clone());
    }
    let baseline_key = (ScoreKind::Influence, "bbox".to_owned());

    let mut proxy_rows = Vec::new();
    if let Some(baseline) = sources.get(&baseline_key) {
        for (key, group) in sources.iter().filter(|(k, _)| **k != baseline_key) {
            for c in proxy_correlation_study(baseline, group) {
                let mut cells = vec![
                    key.0.as_str().to_owned(),
                    key.1.clone(),
                    c.subset.as_str().into(),
                    c.metric.map(|m| m.as_str()).unwrap_or_default().into(),
                    c.model_id.clone(),
                ];
                cells.extend(correlation_cells(&c));
                proxy_rows.push(cells);
            }
        }
    }
    write_csv(
        &out_dir.join("proxy_correlation.csv"),
        config,
        &[
            "source_kind",
            "source_region",
            "subset",
            "metric",
            "model_id",
            "dropped",
            "n",
            "pearson_r",
            "r_squared",
        ],
        &proxy_rows,
    )?;

    let mut metric_rows = Vec::new();
    for (key, group) in &sources {
        for c in metric_correlation(group) {
            let mut cells = vec![
                key.0.as_str().to_owned(),
                key.1.clone(),
                c.subset.as_str().into(),
                c.model_id.clone(),
            ];
            cells.extend(correlation_cells(&c));
            metric_rows.push(cells);
        }
    }
    write_csv(
        &out_dir.join("metric_correlation.csv"),
        config,
        &[
            "kind",
            "region",
            "subset",
            "model_id",
            "dropped",
            "n",
            "pearson_r",
            "r_squared",
        ],
        &metric_rows,
    )
}
