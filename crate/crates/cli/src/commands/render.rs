use super::{load_manifest, load_scores};
use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use crate::output::create;
use std::io::Write;
use std::path::Path;
use tsi_core::render::{render_heatmap, render_heatmap_with_boxes};

/// Write one score map as PGM, or as PPM with green box outlines when a
/// manifest is given.
pub fn run(
    config: &PipelineConfig,
    scores: &Path,
    image_id: Option<&str>,
    model_id: Option<&str>,
    manifest: Option<&Path>,
    out: &Path,
) -> CliResult<()> {
    let maps = load_scores(scores)?;
    let map = maps
        .iter()
        .find(|m| image_id.is_none_or(|id| m.image_id == id) && model_id.is_none_or(|id| m.model_id == id))
        .ok_or_else(|| CliError::input(format!("{}: no matching score record", scores.display())))?;

    let hash = format!("config_hash={}", config.hash());
    let label = format!("{} {} {}", map.image_id, map.model_id, map.kind);
    let comments = [hash.as_str(), label.as_str()];
    let bytes = match manifest {
        None => render_heatmap(map).encode(&comments),
        Some(path) => {
            let loaded = load_manifest(path, config)?;
            let rec = loaded
                .corpus
                .record(&map.image_id)
                .ok_or_else(|| CliError::input(format!("image_id {:?} not in {}", map.image_id, path.display())))?;
            if rec.grid != map.grid {
                return Err(CliError::input(format!(
                    "image_id {:?}: score grid disagrees with the manifest",
                    map.image_id
                )));
            }
            render_heatmap_with_boxes(map, &rec.boxes).encode(&comments)
        }
    };
    let mut w = create(out)?;
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}
