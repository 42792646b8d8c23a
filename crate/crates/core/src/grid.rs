//! Geometry between pixel-space boxes and the row-major patch-token grid.
//!
//! All rectangles are half-open: a box `(x_min, y_min, x_max, y_max)` covers
//! pixels `p` with `x_min <= p.x < x_max` and `y_min <= p.y < y_max`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GridError {
    #[error("grid dimensions must be positive (got {width}x{height}, patch {patch})")]
    NonPositive { width: u32, height: u32, patch: u32 },
    #[error("patch size {patch} does not evenly divide image size {width}x{height}")]
    NonDivisible { width: u32, height: u32, patch: u32 },
    #[error("token index {index} out of range for a grid of {n_tokens} tokens")]
    IndexOutOfRange { index: usize, n_tokens: usize },
    #[error("inverted or empty box ({x_min}, {y_min}, {x_max}, {y_max})")]
    InvertedBox {
        x_min: i64,
        y_min: i64,
        x_max: i64,
        y_max: i64,
    },
    #[error("no annotation box intersects the image")]
    EmptyAnnotation,
    #[error("token mask has {got} entries, grid has {expected} tokens")]
    MaskLength { got: usize, expected: usize },
}

/// Patch-token grid over an image whose sides are exact multiples of the patch size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenGrid {
    image_width: u32,
    image_height: u32,
    patch_size: u32,
}

impl TokenGrid {
    pub fn new(image_width: u32, image_height: u32, patch_size: u32) -> Result<Self, GridError> {
        if image_width == 0 || image_height == 0 || patch_size == 0 {
            return Err(GridError::NonPositive {
                width: image_width,
                height: image_height,
                patch: patch_size,
            });
        }
        if !image_width.is_multiple_of(patch_size) || !image_height.is_multiple_of(patch_size) {
            return Err(GridError::NonDivisible {
                width: image_width,
                height: image_height,
                patch: patch_size,
            });
        }
        Ok(Self {
            image_width,
            image_height,
            patch_size,
        })
    }

    /// The 224x224 image, 16-pixel patch configuration (14x14 = 196 tokens).
    pub fn vit_b16() -> Self {
        Self {
            image_width: 224,
            image_height: 224,
            patch_size: 16,
        }
    }

    pub fn image_width(&self) -> u32 {
        self.image_width
    }

    pub fn image_height(&self) -> u32 {
        self.image_height
    }

    pub fn patch_size(&self) -> u32 {
        self.patch_size
    }

    pub fn n_cols(&self) -> usize {
        (self.image_width / self.patch_size) as usize
    }

    pub fn n_rows(&self) -> usize {
        (self.image_height / self.patch_size) as usize
    }

    pub fn n_tokens(&self) -> usize {
        self.n_rows() * self.n_cols()
    }

    /// `(row, col)` of token `k` in row-major order.
    pub fn row_col(&self, k: usize) -> Result<(usize, usize), GridError> {
        self.check_index(k)?;
        Ok((k / self.n_cols(), k % self.n_cols()))
    }

    pub fn index_of(&self, row: usize, col: usize) -> usize {
        row * self.n_cols() + col
    }

    pub fn check_index(&self, k: usize) -> Result<(), GridError> {
        if k >= self.n_tokens() {
            return Err(GridError::IndexOutOfRange {
                index: k,
                n_tokens: self.n_tokens(),
            });
        }
        Ok(())
    }

    /// Pixel rectangle covered by token `k`.
    pub fn token_rect(&self, k: usize) -> Result<BoundingBox, GridError> {
        let (row, col) = self.row_col(k)?;
        let p = i64::from(self.patch_size);
        Ok(BoundingBox {
            x_min: col as i64 * p,
            y_min: row as i64 * p,
            x_max: (col as i64 + 1) * p,
            y_max: (row as i64 + 1) * p,
        })
    }

    pub fn image_rect(&self) -> BoundingBox {
        BoundingBox {
            x_min: 0,
            y_min: 0,
            x_max: i64::from(self.image_width),
            y_max: i64::from(self.image_height),
        }
    }
}

/// Build a grid, rejecting sizes the patch does not divide.
pub fn build_grid(image_width: u32, image_height: u32, patch_size: u32) -> Result<TokenGrid, GridError> {
    TokenGrid::new(image_width, image_height, patch_size)
}

/// Half-open pixel rectangle. Coordinates may lie outside the image until clipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: i64,
    pub y_min: i64,
    pub x_max: i64,
    pub y_max: i64,
}

impl BoundingBox {
    pub fn new(x_min: i64, y_min: i64, x_max: i64, y_max: i64) -> Result<Self, GridError> {
        if x_min >= x_max || y_min >= y_max {
            return Err(GridError::InvertedBox {
                x_min,
                y_min,
                x_max,
                y_max,
            });
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn width(&self) -> i64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> i64 {
        self.y_max - self.y_min
    }

    pub fn intersect(&self, other: &BoundingBox) -> Option<BoundingBox> {
        let x_min = self.x_min.max(other.x_min);
        let y_min = self.y_min.max(other.y_min);
        let x_max = self.x_max.min(other.x_max);
        let y_max = self.y_max.min(other.y_max);
        (x_min < x_max && y_min < y_max).then_some(BoundingBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Clip to the image; `None` when nothing of the box remains.
    pub fn clip_to(&self, grid: &TokenGrid) -> Option<BoundingBox> {
        self.intersect(&grid.image_rect())
    }

    pub fn contains_pixel(&self, x: i64, y: i64) -> bool {
        self.x_min <= x && x < self.x_max && self.y_min <= y && y < self.y_max
    }
}

/// How a token partially covered by a box is assigned.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OverlapRule {
    /// Any positive-area intersection puts the token inside.
    #[default]
    AnyOverlap,
    /// The token is inside iff its center point lies in the box.
    CenterPoint,
}

/// Disjoint inside/outside token index sets covering the whole grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenPartition {
    grid: TokenGrid,
    inside: Vec<bool>,
    b_in: Vec<usize>,
    b_out: Vec<usize>,
}

impl TokenPartition {
    pub fn from_mask(grid: TokenGrid, inside: Vec<bool>) -> Result<Self, GridError> {
        if inside.len() != grid.n_tokens() {
            return Err(GridError::MaskLength {
                got: inside.len(),
                expected: grid.n_tokens(),
            });
        }
        let (b_in, b_out): (Vec<usize>, Vec<usize>) = (0..inside.len()).partition(|&k| inside[k]);
        Ok(Self {
            grid,
            inside,
            b_in,
            b_out,
        })
    }

    /// Partition whose inside set is exactly `indices`.
    pub fn from_indices(grid: TokenGrid, indices: impl IntoIterator<Item = usize>) -> Result<Self, GridError> {
        let mut inside = vec![false; grid.n_tokens()];
        for k in indices {
            grid.check_index(k)?;
            inside[k] = true;
        }
        Self::from_mask(grid, inside)
    }

    pub fn grid(&self) -> &TokenGrid {
        &self.grid
    }

    /// Sorted token indices inside the region.
    pub fn b_in(&self) -> &[usize] {
        &self.b_in
    }

    /// Sorted token indices outside the region.
    pub fn b_out(&self) -> &[usize] {
        &self.b_out
    }

    pub fn n_in(&self) -> usize {
        self.b_in.len()
    }

    pub fn n_out(&self) -> usize {
        self.b_out.len()
    }

    pub fn is_inside(&self, k: usize) -> bool {
        self.inside.get(k).copied().unwrap_or(false)
    }

    pub fn mask(&self) -> &[bool] {
        &self.inside
    }
}

fn mark_box(grid: &TokenGrid, bbox: &BoundingBox, rule: OverlapRule, inside: &mut [bool]) {
    let p = i64::from(grid.patch_size());
    let (col_lo, col_hi, row_lo, row_hi) = match rule {
        OverlapRule::AnyOverlap => (
            bbox.x_min / p,
            (bbox.x_max + p - 1) / p,
            bbox.y_min / p,
            (bbox.y_max + p - 1) / p,
        ),
        // center of column c is c*p + p/2; compare in doubled units to stay integral
        OverlapRule::CenterPoint => {
            let first = |lo: i64| (2 * lo - p + 2 * p - 1).div_euclid(2 * p);
            let past = |hi: i64| (2 * hi - p + 2 * p - 1).div_euclid(2 * p);
            (first(bbox.x_min), past(bbox.x_max), first(bbox.y_min), past(bbox.y_max))
        }
    };
    let n_cols = grid.n_cols() as i64;
    let n_rows = grid.n_rows() as i64;
    for row in row_lo.max(0)..row_hi.min(n_rows) {
        for col in col_lo.max(0)..col_hi.min(n_cols) {
            inside[grid.index_of(row as usize, col as usize)] = true;
        }
    }
}

/// Partition induced by the union of `boxes` under `rule`.
///
/// Boxes are clipped to the image first; boxes entirely outside the image are
/// dropped. If none survive, [`GridError::EmptyAnnotation`] is returned.
pub fn bbox_to_partition_with(
    grid: &TokenGrid,
    boxes: &[BoundingBox],
    rule: OverlapRule,
) -> Result<TokenPartition, GridError> {
    let mut inside = vec![false; grid.n_tokens()];
    let mut any = false;
    for bbox in boxes {
        if bbox.x_min >= bbox.x_max || bbox.y_min >= bbox.y_max {
            return Err(GridError::InvertedBox {
                x_min: bbox.x_min,
                y_min: bbox.y_min,
                x_max: bbox.x_max,
                y_max: bbox.y_max,
            });
        }
        if let Some(clipped) = bbox.clip_to(grid) {
            any = true;
            mark_box(grid, &clipped, rule, &mut inside);
        }
    }
    if !any {
        return Err(GridError::EmptyAnnotation);
    }
    TokenPartition::from_mask(*grid, inside)
}

/// [`bbox_to_partition_with`] under the default positive-overlap rule.
pub fn bbox_to_partition(grid: &TokenGrid, boxes: &[BoundingBox]) -> Result<TokenPartition, GridError> {
    bbox_to_partition_with(grid, boxes, OverlapRule::AnyOverlap)
}

/// Number of tokens inside the region.
pub fn coverage(partition: &TokenPartition) -> usize {
    partition.n_in()
}
