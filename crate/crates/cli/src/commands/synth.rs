//! Small synthetic corpus: noisy images with one bright "watermark" token
//! placed inside or outside an annotated box.

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use crate::output::create;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::Path;
use tsi_core::dataset::{write_voc_xml, ManifestHeader, ManifestPrediction, ManifestRecord};
use tsi_core::grid::{BoundingBox, TokenGrid};
use tsi_core::model::{argmax, predict, ImageBuffer, MiniVit, Predictor};
use tsi_core::pnm::Pixmap;
use tsi_core::tokenize;

const SIDE_TOKENS: u32 = 4;

pub fn run(config: &PipelineConfig, out_dir: &Path, n_images: usize, n_models: usize) -> CliResult<()> {
    if n_models == 0 {
        return Err(CliError::input("--models must be at least 1"));
    }
    let p = config.patch_size;
    let side = SIDE_TOKENS * p;
    let grid = TokenGrid::new(side, side, p).map_err(CliError::input)?;
    let model_ids: Vec<String> = (0..n_models).map(|i| format!("vit-{i}")).collect();
    let models = model_ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            MiniVit::new(
                id.clone(),
                config.seed.wrapping_add(i as u64),
                config.vit_config(grid, 3)?,
            )
            .map_err(CliError::input)
        })
        .collect::<CliResult<Vec<_>>>()?;

    std::fs::create_dir_all(out_dir.join("images"))?;
    std::fs::create_dir_all(out_dir.join("annotations"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut manifest = create(&out_dir.join("manifest.jsonl"))?;
    let header = ManifestHeader {
        model_ids: model_ids.clone(),
    };
    writeln!(manifest, "{}", serde_json::to_string(&header).map_err(CliError::input)?)?;

    for i in 0..n_images {
        let id = format!("img-{i:04}");
        // sweep box sizes so every coverage bin and the large-box case appear
        let (w_t, h_t) = (1 + (i as u32 % SIDE_TOKENS), 1 + (i as u32 / SIDE_TOKENS) % SIDE_TOKENS);
        let col0 = rng.gen_range(0..=SIDE_TOKENS - w_t);
        let row0 = rng.gen_range(0..=SIDE_TOKENS - h_t);
        let jitter = (p / 4).max(1);
        let bbox = BoundingBox::new(
            i64::from(col0 * p + rng.gen_range(0..jitter)),
            i64::from(row0 * p + rng.gen_range(0..jitter)),
            i64::from((col0 + w_t) * p - rng.gen_range(0..jitter)),
            i64::from((row0 + h_t) * p - rng.gen_range(0..jitter)),
        )
        .map_err(CliError::input)?;

        let inside: Vec<usize> = (0..grid.n_tokens())
            .filter(|&k| {
                let (r, c) = grid.row_col(k).expect("in range");
                (row0..row0 + h_t).contains(&(r as u32)) && (col0..col0 + w_t).contains(&(c as u32))
            })
            .collect();
        let outside: Vec<usize> = (0..grid.n_tokens()).filter(|k| !inside.contains(k)).collect();
        let pool = if i % 2 == 1 && !outside.is_empty() {
            &outside
        } else {
            &inside
        };
        let signal = pool[rng.gen_range(0..pool.len())];

        let mut img = ImageBuffer::filled(side, side, 3, 0.0);
        for y in 0..side as usize {
            for x in 0..side as usize {
                let in_box = bbox.contains_pixel(x as i64, y as i64);
                for (ch, v) in img.pixel_mut(x, y).iter_mut().enumerate() {
                    let tint = if in_box && ch == 0 { 0.3 } else { 0.0 };
                    *v = tint + rng.gen_range(0.0..0.25);
                }
            }
        }
        let (r, c) = grid.row_col(signal).expect("in range");
        for y in r * p as usize..(r + 1) * p as usize {
            for x in c * p as usize..(c + 1) * p as usize {
                for v in img.pixel_mut(x, y) {
                    *v = rng.gen_range(0.9..1.0);
                }
            }
        }

        let pix = Pixmap::from_image_buffer(&img);
        let image_rel = format!("images/{id}.ppm");
        std::fs::write(out_dir.join(&image_rel), pix.encode(&[]))?;
        // predict on exactly what later stages will read back
        let tokens = tokenize(&pix.to_image_buffer(), &grid, id.clone()).map_err(CliError::input)?;
        let predictions = models
            .iter()
            .map(|m| {
                let probs = predict(m, &tokens, &tokens.all_tokens()).map_err(CliError::input)?;
                let top = argmax(&probs);
                Ok(ManifestPrediction {
                    model_id: m.model_id().to_owned(),
                    predicted_class: top.to_string(),
                    confidence: probs[top],
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        let true_class = if rng.gen_bool(0.5) {
            predictions[0].predicted_class.clone()
        } else {
            rng.gen_range(0..config.vit_classes).to_string()
        };

        let ann_rel = format!("annotations/{id}.xml");
        let xml = write_voc_xml(&format!("{id}.ppm"), side, side, &true_class, &[bbox]);
        std::fs::write(out_dir.join(&ann_rel), xml)?;

        let record = ManifestRecord {
            image_id: id,
            true_class,
            annotation_path: Some(ann_rel),
            boxes: None,
            predictions,
            width: side,
            height: side,
            image_path: Some(image_rel),
            signal_tokens: Some(vec![signal]),
        };
        writeln!(manifest, "{}", serde_json::to_string(&record).map_err(CliError::input)?)?;
    }
    manifest.flush()?;
    Ok(())
}
