//! Confidence drop after discarding each source's top-ranked tokens.

use super::{load_manifest, load_scores, LoadedCorpus, VitBank};
use crate::commands::influence::PredictorKind;
use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use crate::output::{fmt_g6, write_csv};
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use tsi_core::analysis::{masking_comparison, MaskingInput, ScoreSource};
use tsi_core::influence::{InfluenceMap, ScoreKind};
use tsi_core::model::{argmax, predict, ModelError, PlantedPredictor, Predictor, TokenizedImage};

/// One model identity whose weights may differ per image (planted signal
/// tokens, or image size for the mini ViT).
struct PerImage<'a> {
    model_id: String,
    n_classes: usize,
    by_image: BTreeMap<String, Box<dyn Predictor + 'a>>,
}

impl Predictor for PerImage<'_> {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn evaluate(&self, img: &TokenizedImage, present: &[usize]) -> Result<Vec<f64>, ModelError> {
        self.by_image
            .get(&img.image_id)
            .ok_or_else(|| ModelError::InvalidConfig(format!("no predictor for image {:?}", img.image_id)))?
            .evaluate(img, present)
    }
}

fn predictors<'a>(
    config: &PipelineConfig,
    loaded: &LoadedCorpus,
    kind: PredictorKind,
    images: &[TokenizedImage],
    bank: Option<&'a VitBank>,
) -> CliResult<Vec<PerImage<'a>>> {
    let mut out = Vec::new();
    for (i, model_id) in loaded.corpus.model_ids.iter().enumerate() {
        let mut by_image: BTreeMap<String, Box<dyn Predictor + 'a>> = BTreeMap::new();
        let mut n_classes = 2;
        for (rec, img) in loaded.corpus.records.iter().zip(images) {
            let p: Box<dyn Predictor + 'a> = match (kind, bank) {
                (PredictorKind::MiniVit, Some(bank)) => Box::new(bank.get(i, img)),
                _ => {
                    let signal = rec
                        .signal_tokens
                        .clone()
                        .ok_or_else(|| CliError::input(format!("record {:?} has no signal_tokens", rec.image_id)))?;
                    Box::new(
                        PlantedPredictor::new(model_id.clone(), signal, config.planted_weight)
                            .map_err(|e| CliError::input(format!("record {:?}: {e}", rec.image_id)))?,
                    )
                }
            };
            n_classes = p.n_classes();
            by_image.insert(rec.image_id.clone(), p);
        }
        out.push(PerImage {
            model_id: model_id.clone(),
            n_classes,
            by_image,
        });
    }
    Ok(out)
}

pub fn run(
    config: &PipelineConfig,
    manifest: &Path,
    predictor: PredictorKind,
    score_paths: &[PathBuf],
    out: &Path,
) -> CliResult<()> {
    if predictor == PredictorKind::Offline {
        return Err(CliError::input("masking needs a live predictor (mini-vit or planted)"));
    }
    if score_paths.is_empty() {
        return Err(CliError::input("masking needs at least one --scores file"));
    }
    let loaded = load_manifest(manifest, config)?;
    let mut maps: Vec<InfluenceMap> = Vec::new();
    for path in score_paths {
        maps.extend(load_scores(path)?);
    }
    let images: Vec<TokenizedImage> = loaded
        .corpus
        .records
        .iter()
        .map(|r| loaded.tokens(r))
        .collect::<CliResult<_>>()?;
    let bank = match predictor {
        PredictorKind::MiniVit => Some(VitBank::build(config, &loaded.corpus.model_ids, &images)?),
        _ => None,
    };
    let models = predictors(config, &loaded, predictor, &images, bank.as_ref())?;
    let ns: Vec<usize> = config.ns.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let kinds: BTreeSet<ScoreKind> = maps.iter().map(|m| m.kind).collect();

    let pool = rayon_pool(config.workers)?;
    let mut rows = Vec::new();
    for model in &models {
        let inputs = images
            .iter()
            .map(|img| {
                let probs = predict(model, img, &img.all_tokens()).map_err(CliError::input)?;
                Ok(MaskingInput {
                    image: img.clone(),
                    target_class: argmax(&probs),
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        let sources: Vec<ScoreSource> = kinds
            .iter()
            .map(|&kind| ScoreSource {
                name: kind.as_str().into(),
                maps: maps
                    .iter()
                    .filter(|m| m.kind == kind && m.model_id == model.model_id)
                    .cloned()
                    .collect(),
            })
            .collect();
        let cells = pool
            .install(|| masking_comparison(model, &inputs, &sources, &ns))
            .map_err(CliError::input)?;
        for c in cells {
            rows.push(vec![
                model.model_id.clone(),
                c.source,
                c.n_tokens.to_string(),
                c.n_images.to_string(),
                fmt_g6(c.mean),
                fmt_g6(c.std),
            ]);
        }
    }
    write_csv(
        out,
        config,
        &["model_id", "source", "n_tokens", "n_images", "mean", "std"],
        &rows,
    )
}

fn rayon_pool(workers: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(CliError::input)
}
