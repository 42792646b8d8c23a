//! Per-token score maps for every (image, model) of a manifest.

use super::{load_manifest, load_scores, LoadedCorpus, VitBank};
use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use crate::output::{create, write_provenance};
use clap::ValueEnum;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use tsi_core::influence::{write_score_records, InfluenceEngine, InfluenceMap, ScoreKind};
use tsi_core::model::{argmax, predict, PlantedPredictor, Predictor, TokenizedImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PredictorKind {
    MiniVit,
    Planted,
    Offline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MapKind {
    Influence,
    Attention,
}

impl From<MapKind> for ScoreKind {
    fn from(k: MapKind) -> Self {
        match k {
            MapKind::Influence => ScoreKind::Influence,
            MapKind::Attention => ScoreKind::Attention,
        }
    }
}

pub fn run(
    config: &PipelineConfig,
    manifest: &Path,
    predictor: PredictorKind,
    scores: Option<&Path>,
    kind: MapKind,
    out: &Path,
) -> CliResult<()> {
    let loaded = load_manifest(manifest, config)?;
    let maps = match predictor {
        PredictorKind::Offline => {
            let path = scores.ok_or_else(|| CliError::input("--predictor offline needs --scores"))?;
            offline_maps(&loaded, &load_scores(path)?, kind.into())?
        }
        PredictorKind::MiniVit => vit_maps(config, &loaded, kind)?,
        PredictorKind::Planted => {
            if kind == MapKind::Attention {
                return Err(CliError::input("the planted predictor has no attention maps"));
            }
            planted_maps(config, &loaded)?
        }
    };

    let mut w = create(out)?;
    if !loaded.corpus.records.is_empty() {
        write_provenance(&mut w, config)?;
    }
    write_score_records(&mut w, &maps)?;
    w.flush()?;
    Ok(())
}

fn offline_maps(loaded: &LoadedCorpus, records: &[InfluenceMap], kind: ScoreKind) -> CliResult<Vec<InfluenceMap>> {
    let index: BTreeMap<(&str, &str), &InfluenceMap> = records
        .iter()
        .filter(|m| m.kind == kind)
        .map(|m| ((m.image_id.as_str(), m.model_id.as_str()), m))
        .collect();
    let mut maps = Vec::new();
    for rec in &loaded.corpus.records {
        for model_id in &loaded.corpus.model_ids {
            let m = index.get(&(rec.image_id.as_str(), model_id.as_str())).ok_or_else(|| {
                CliError::schema(format!(
                    "no {kind} record for image_id {:?} and model {model_id:?}",
                    rec.image_id
                ))
            })?;
            if m.grid != rec.grid {
                return Err(CliError::schema(format!(
                    "record for image_id {:?} has a grid that disagrees with the manifest",
                    rec.image_id
                )));
            }
            maps.push((*m).clone());
        }
    }
    Ok(maps)
}

fn tokenized(loaded: &LoadedCorpus) -> CliResult<Vec<TokenizedImage>> {
    loaded.corpus.records.iter().map(|r| loaded.tokens(r)).collect()
}

/// Influence (or attention) for the model's own top class on the full image.
fn map_for<P: Predictor + ?Sized>(
    engine: &InfluenceEngine,
    p: &P,
    img: &TokenizedImage,
    attention: Option<&tsi_core::model::MiniVit>,
) -> CliResult<InfluenceMap> {
    let probs = predict(p, img, &img.all_tokens()).map_err(CliError::input)?;
    let target = argmax(&probs);
    match attention {
        Some(vit) => {
            let att = vit.attention_map(img).map_err(CliError::input)?;
            Ok(InfluenceMap::from_attention(&att, target, probs[target]))
        }
        None => engine.influence_map(p, img, target).map_err(CliError::input),
    }
}

fn vit_maps(config: &PipelineConfig, loaded: &LoadedCorpus, kind: MapKind) -> CliResult<Vec<InfluenceMap>> {
    let images = tokenized(loaded)?;
    let model_ids = &loaded.corpus.model_ids;
    let bank = VitBank::build(config, model_ids, &images)?;
    let engine = InfluenceEngine::new(config.workers).map_err(CliError::input)?;
    let per_image = engine.map_ordered(&images, |img| {
        (0..model_ids.len())
            .map(|i| {
                let vit = bank.get(i, img);
                map_for(&engine, vit, img, (kind == MapKind::Attention).then_some(vit))
            })
            .collect::<CliResult<Vec<_>>>()
    });
    Ok(per_image.into_iter().collect::<CliResult<Vec<_>>>()?.concat())
}

fn planted_maps(config: &PipelineConfig, loaded: &LoadedCorpus) -> CliResult<Vec<InfluenceMap>> {
    let images = tokenized(loaded)?;
    let mut jobs = Vec::new();
    for (rec, img) in loaded.corpus.records.iter().zip(&images) {
        let signal = rec.signal_tokens.clone().ok_or_else(|| {
            CliError::input(format!(
                "record {:?} has no signal_tokens for the planted predictor",
                rec.image_id
            ))
        })?;
        for id in &loaded.corpus.model_ids {
            let p = PlantedPredictor::new(id.clone(), signal.iter().copied(), config.planted_weight)
                .map_err(|e| CliError::input(format!("record {:?}: {e}", rec.image_id)))?;
            jobs.push((p, img));
        }
    }
    let engine = InfluenceEngine::new(config.workers).map_err(CliError::input)?;
    engine
        .map_ordered(&jobs, |(p, img)| map_for(&engine, p, img, None))
        .into_iter()
        .collect()
}
