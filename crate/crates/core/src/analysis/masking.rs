use super::{mean_std, AnalysisError};
use crate::influence::{mask_and_measure, top_n_tokens, InfluenceMap};
use crate::model::{Predictor, TokenizedImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub struct MaskingInput {
    pub image: TokenizedImage,
    pub target_class: usize,
}

/// Named set of score maps ranking tokens for removal (influence, saliency, ...).
pub struct ScoreSource {
    pub name: String,
    pub maps: Vec<InfluenceMap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskingCell {
    pub source: String,
    pub n_tokens: usize,
    pub n_images: usize,
    pub mean: f64,
    pub std: f64,
}

/// For each source and each `n`, discard that source's top-`n` tokens from
/// every image and aggregate the signed confidence drop of the target class.
pub fn masking_comparison<P: Predictor + ?Sized>(
    p: &P,
    inputs: &[MaskingInput],
    sources: &[ScoreSource],
    ns: &[usize],
) -> Result<Vec<MaskingCell>, AnalysisError> {
    // sum in image_id order whatever order the inputs come in
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    order.sort_by(|&a, &b| inputs[a].image.image_id.cmp(&inputs[b].image.image_id));

    let mut cells = Vec::with_capacity(sources.len() * ns.len());
    for source in sources {
        let by_image: BTreeMap<&str, &InfluenceMap> = source.maps.iter().map(|m| (m.image_id.as_str(), m)).collect();
        let maps = order
            .iter()
            .map(|&i| {
                let id = inputs[i].image.image_id.as_str();
                by_image.get(id).copied().ok_or_else(|| AnalysisError::MissingScores {
                    source_name: source.name.clone(),
                    image_id: id.to_owned(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;

        for &n in ns {
            let deltas = order
                .par_iter()
                .zip(maps.par_iter())
                .map(|(&i, map)| {
                    let input = &inputs[i];
                    let discard = top_n_tokens(map, n)?;
                    Ok(mask_and_measure(p, &input.image, &discard, input.target_class)?)
                })
                .collect::<Result<Vec<f64>, AnalysisError>>()?;
            let (mean, std) = if deltas.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                mean_std(&deltas)?
            };
            cells.push(MaskingCell {
                source: source.name.clone(),
                n_tokens: n,
                n_images: deltas.len(),
                mean,
                std,
            });
        }
    }
    Ok(cells)
}
