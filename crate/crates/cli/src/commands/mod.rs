pub mod influence;
pub mod mask;
pub mod render;
pub mod synth;
pub mod tables;
pub mod tsi;

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use crate::output::open;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use tsi_core::dataset::{load_corpus, Corpus, CorpusErrorKind, DirAnnotations, ImageRecord};
use tsi_core::influence::{load_score_records, InfluenceMap, RecordErrorKind};
use tsi_core::model::{ImageBuffer, MiniVit, TokenizedImage};
use tsi_core::pnm::Pixmap;
use tsi_core::tokenize;

/// A manifest together with the directory its relative paths resolve against.
pub struct LoadedCorpus {
    pub corpus: Corpus,
    pub base: PathBuf,
}

pub fn load_manifest(path: &Path, config: &PipelineConfig) -> CliResult<LoadedCorpus> {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let reader = open(path)?;
    match load_corpus(reader, &DirAnnotations::new(&base), config.patch_size) {
        Ok(corpus) => Ok(LoadedCorpus { corpus, base }),
        Err(e) => {
            for err in &e.errors {
                eprintln!("{}:{err}", path.display());
            }
            let schema = e
                .errors
                .iter()
                .any(|err| matches!(err.kind, CorpusErrorKind::SchemaViolation(_)));
            let msg = format!("{}: {e}", path.display());
            Err(if schema {
                CliError::schema(msg)
            } else {
                CliError::input(msg)
            })
        }
    }
}

pub fn load_scores(path: &Path) -> CliResult<Vec<InfluenceMap>> {
    load_score_records(open(path)?).map_err(|e| {
        let msg = format!("{}:{e}", path.display());
        match e.kind {
            RecordErrorKind::Io(_) => CliError::input(msg),
            _ => CliError::schema(msg),
        }
    })
}

impl LoadedCorpus {
    pub fn image(&self, rec: &ImageRecord) -> CliResult<ImageBuffer> {
        let rel = rec
            .image_path
            .as_deref()
            .ok_or_else(|| CliError::input(format!("record {:?} has no image_path", rec.image_id)))?;
        let path = self.base.join(rel);
        let bytes = std::fs::read(&path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let pix = Pixmap::decode(&bytes).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        if pix.width != rec.grid.image_width() || pix.height != rec.grid.image_height() {
            return Err(CliError::input(format!(
                "{}: image is {}x{} but the manifest says {}x{}",
                path.display(),
                pix.width,
                pix.height,
                rec.grid.image_width(),
                rec.grid.image_height()
            )));
        }
        Ok(pix.to_image_buffer())
    }

    pub fn tokens(&self, rec: &ImageRecord) -> CliResult<TokenizedImage> {
        tokenize(&self.image(rec)?, &rec.grid, rec.image_id.clone()).map_err(CliError::input)
    }
}

type VitKey = (usize, u32, u32, usize);

/// Mini ViTs keyed by (model index, image size, channels); model `i` is
/// seeded with `config.seed + i`.
pub struct VitBank {
    models: BTreeMap<VitKey, MiniVit>,
}

impl VitBank {
    pub fn build(config: &PipelineConfig, model_ids: &[String], images: &[TokenizedImage]) -> CliResult<Self> {
        let mut models = BTreeMap::new();
        for img in images {
            for (i, id) in model_ids.iter().enumerate() {
                let key = (i, img.grid.image_width(), img.grid.image_height(), img.channels);
                if models.contains_key(&key) {
                    continue;
                }
                let vit_cfg = config.vit_config(img.grid, img.channels)?;
                let model =
                    MiniVit::new(id.clone(), config.seed.wrapping_add(i as u64), vit_cfg).map_err(CliError::input)?;
                models.insert(key, model);
            }
        }
        Ok(Self { models })
    }

    pub fn get(&self, index: usize, img: &TokenizedImage) -> &MiniVit {
        &self.models[&(index, img.grid.image_width(), img.grid.image_height(), img.channels)]
    }
}

/// Comma-separated counts such as `1,3,5`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountList(pub Vec<usize>);

pub fn parse_list(s: &str) -> Result<CountList, String> {
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<_, _>>()
        .map(CountList)
}
