//! Token heatmaps.

use crate::grid::BoundingBox;
use crate::influence::InfluenceMap;
use crate::pnm::Pixmap;

const GREEN: [u8; 3] = [0, 255, 0];

/// Gray level per token: `round(255 * z / max z)`, all zero when `max z = 0`.
pub fn gray_levels(scores: &[f64]) -> Vec<u8> {
    let max = scores.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return vec![0; scores.len()];
    }
    scores
        .iter()
        .map(|&z| (255.0 * z / max).round().clamp(0.0, 255.0) as u8)
        .collect()
}

/// Grayscale image at the map's pixel resolution, each patch filled with its
/// token's gray level.
pub fn render_heatmap(map: &InfluenceMap) -> Pixmap {
    let grid = map.grid;
    let levels = gray_levels(&map.scores);
    let mut img = Pixmap::new(grid.image_width(), grid.image_height(), 1);
    let p = grid.patch_size() as usize;
    for y in 0..grid.image_height() as usize {
        for x in 0..grid.image_width() as usize {
            let k = grid.index_of(y / p, x / p);
            img.pixel_mut(x, y)[0] = levels[k];
        }
    }
    img
}

/// RGB heatmap with the outline of each box (clipped to the image) in green.
pub fn render_heatmap_with_boxes(map: &InfluenceMap, boxes: &[BoundingBox]) -> Pixmap {
    let gray = render_heatmap(map);
    let mut img = Pixmap::new(gray.width, gray.height, 3);
    for (dst, &g) in img.data.chunks_exact_mut(3).zip(&gray.data) {
        dst.fill(g);
    }
    for b in boxes {
        let Some(c) = b.clip_to(&map.grid) else {
            continue;
        };
        let (x0, y0, x1, y1) = (
            c.x_min as usize,
            c.y_min as usize,
            c.x_max as usize - 1,
            c.y_max as usize - 1,
        );
        for x in x0..=x1 {
            img.pixel_mut(x, y0).copy_from_slice(&GREEN);
            img.pixel_mut(x, y1).copy_from_slice(&GREEN);
        }
        for y in y0..=y1 {
            img.pixel_mut(x0, y).copy_from_slice(&GREEN);
            img.pixel_mut(x1, y).copy_from_slice(&GREEN);
        }
    }
    img
}
