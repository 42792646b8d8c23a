//! Join score maps with annotations and compute both indices per map.

use super::{load_manifest, load_scores};
use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use crate::output::{create, write_provenance, TsiRow};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use tsi_core::analysis::TsiSample;
use tsi_core::dataset::{assign_subset, ImageRecord, PartitionConfig};
use tsi_core::grid::{bbox_to_partition_with, GridError, TokenPartition};
use tsi_core::influence::{InfluenceMap, ScoreKind};
use tsi_core::metrics::{attention_topk_partition, tsi_scores};

pub fn run(config: &PipelineConfig, scores: &Path, manifest: &Path, top_k: &[usize], out: &Path) -> CliResult<()> {
    let loaded = load_manifest(manifest, config)?;
    let maps = load_scores(scores)?;
    let corpus = &loaded.corpus;

    let unmatched: Vec<&InfluenceMap> = maps
        .iter()
        .filter(|m| corpus.record(&m.image_id).is_none() || !corpus.model_ids.contains(&m.model_id))
        .collect();
    if !unmatched.is_empty() {
        for m in &unmatched {
            eprintln!("unmatched: image_id {:?} model {:?}", m.image_id, m.model_id);
        }
        return Err(CliError::input(format!(
            "{} score record(s) do not match the manifest",
            unmatched.len()
        )));
    }

    let attention: BTreeMap<(&str, &str), &InfluenceMap> = maps
        .iter()
        .filter(|m| m.kind == ScoreKind::Attention)
        .map(|m| ((m.image_id.as_str(), m.model_id.as_str()), m))
        .collect();
    let pcfg = config.partition()?;

    let mut rows = Vec::new();
    for m in &maps {
        let rec = corpus.record(&m.image_id).expect("matched above");
        if m.grid != rec.grid {
            return Err(CliError::input(format!(
                "image_id {:?}: score grid disagrees with the manifest",
                m.image_id
            )));
        }
        let part = match bbox_to_partition_with(&rec.grid, &rec.boxes, pcfg.overlap) {
            Ok(p) => p,
            Err(GridError::EmptyAnnotation) => {
                eprintln!("skipping image_id {:?}: no box inside the image", m.image_id);
                continue;
            }
            Err(e) => return Err(CliError::input(format!("image_id {:?}: {e}", m.image_id))),
        };
        rows.push(row(m, rec, &part, "bbox".into(), &pcfg)?);

        if m.kind != ScoreKind::Influence {
            continue;
        }
        let Some(att) = attention.get(&(m.image_id.as_str(), m.model_id.as_str())) else {
            continue;
        };
        for &k in top_k {
            let region = attention_topk_partition(att, k)
                .map_err(|e| CliError::input(format!("image_id {:?}: top-{k}: {e}", m.image_id)))?;
            let mut r = row(m, rec, &region, format!("attn-top{k}"), &pcfg)?;
            // subset and coverage stay tied to the annotation
            r.coverage = part.n_in();
            rows.push(r);
        }
    }

    let mut w = create(out)?;
    if !rows.is_empty() {
        write_provenance(&mut w, config)?;
    }
    for r in &rows {
        writeln!(w, "{}", serde_json::to_string(r).map_err(CliError::input)?)?;
    }
    w.flush()?;
    Ok(())
}

fn row(
    m: &InfluenceMap,
    rec: &ImageRecord,
    part: &TokenPartition,
    region: String,
    pcfg: &PartitionConfig,
) -> CliResult<TsiRow> {
    let pred = rec
        .prediction(&m.model_id)
        .ok_or_else(|| CliError::input(format!("image_id {:?}: no prediction for {:?}", m.image_id, m.model_id)))?;
    let subset = assign_subset(rec, pcfg).map_err(CliError::input)?;
    let scores = tsi_scores(m, part).map_err(CliError::input)?;
    let sample = TsiSample {
        image_id: m.image_id.clone(),
        model_id: m.model_id.clone(),
        kind: m.kind,
        region,
        class_label: rec.true_class.clone(),
        subset,
        coverage: part.n_in(),
        confidence: pred.confidence,
        scores,
    };
    Ok(TsiRow::new(&sample, pred.correct))
}
