//! Predictor abstraction over tokenized images.
//!
//! A [`Predictor`] maps an image plus the set of tokens still present to a
//! confidence vector over classes. Discarded tokens are removed from the
//! input, never replaced by a fill value.

mod planted;
mod vit;

pub use planted::{planted_predictor, PlantedPredictor, UniformPredictor};
pub use vit::{mini_vit_new, AttentionMap, BlockWeights, LayerNorm, Linear, MiniVit, MiniVitConfig, MiniVitWeights};

use crate::grid::TokenGrid;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("pixel buffer is {got_w}x{got_h}x{got_c} ({len} values), grid expects {want_w}x{want_h}")]
    DimensionMismatch {
        got_w: u32,
        got_h: u32,
        got_c: usize,
        len: usize,
        want_w: u32,
        want_h: u32,
    },
    #[error("present token set is empty")]
    EmptyTokenSet,
    #[error("present token set must be strictly increasing indices below {n_tokens}")]
    BadTokenSet { n_tokens: usize },
    #[error("token features have length {got}, model expects {expected}")]
    FeatureMismatch { got: usize, expected: usize },
    #[error("image grid {got:?} differs from model grid {expected:?}")]
    GridMismatch { got: TokenGrid, expected: TokenGrid },
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("class {class} out of range for {n_classes} classes")]
    ClassOutOfRange { class: usize, n_classes: usize },
}

/// Interleaved (row-major, channel-last) pixel buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    pub width: u32,
    pub height: u32,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32, channels: usize, data: Vec<f64>) -> Self {
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn filled(width: u32, height: u32, channels: usize, value: f64) -> Self {
        let len = width as usize * height as usize * channels;
        Self::new(width, height, channels, vec![value; len])
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let start = (y * self.width as usize + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let start = (y * self.width as usize + x) * self.channels;
        &mut self.data[start..start + self.channels]
    }
}

/// Image split into per-token feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedImage {
    pub image_id: String,
    pub grid: TokenGrid,
    pub channels: usize,
    tokens: Vec<Vec<f64>>,
}

impl TokenizedImage {
    pub fn tokens(&self) -> &[Vec<f64>] {
        &self.tokens
    }

    pub fn token(&self, k: usize) -> &[f64] {
        &self.tokens[k]
    }

    pub fn n_tokens(&self) -> usize {
        self.tokens.len()
    }

    pub fn feature_len(&self) -> usize {
        self.tokens.first().map_or(0, Vec::len)
    }

    /// Mean pixel value of token `k` over all channels.
    pub fn token_mean(&self, k: usize) -> f64 {
        let t = &self.tokens[k];
        t.iter().sum::<f64>() / t.len() as f64
    }

    pub fn all_tokens(&self) -> Vec<usize> {
        (0..self.tokens.len()).collect()
    }
}

/// Split `pixels` into patch tokens. Token `k` holds the pixels of
/// `grid.token_rect(k)`, row-major within the patch, channels interleaved.
pub fn tokenize(
    pixels: &ImageBuffer,
    grid: &TokenGrid,
    image_id: impl Into<String>,
) -> Result<TokenizedImage, ModelError> {
    let expected_len = pixels.width as usize * pixels.height as usize * pixels.channels;
    if pixels.width != grid.image_width()
        || pixels.height != grid.image_height()
        || pixels.channels == 0
        || pixels.data.len() != expected_len
    {
        return Err(ModelError::DimensionMismatch {
            got_w: pixels.width,
            got_h: pixels.height,
            got_c: pixels.channels,
            len: pixels.data.len(),
            want_w: grid.image_width(),
            want_h: grid.image_height(),
        });
    }
    let p = grid.patch_size() as usize;
    let tokens = (0..grid.n_tokens())
        .map(|k| {
            let (row, col) = (k / grid.n_cols(), k % grid.n_cols());
            let mut feat = Vec::with_capacity(p * p * pixels.channels);
            for y in row * p..(row + 1) * p {
                for x in col * p..(col + 1) * p {
                    feat.extend_from_slice(pixels.pixel(x, y));
                }
            }
            feat
        })
        .collect();
    Ok(TokenizedImage {
        image_id: image_id.into(),
        grid: *grid,
        channels: pixels.channels,
        tokens,
    })
}

/// A classifier evaluated on a subset of an image's tokens.
///
/// Implementations must be deterministic and safe to call concurrently.
pub trait Predictor: Send + Sync {
    fn model_id(&self) -> &str;

    fn n_classes(&self) -> usize;

    /// Class probabilities with only the tokens in `present` (strictly
    /// increasing, non-empty) in the input sequence. Callers should go
    /// through [`predict`], which validates `present`.
    fn evaluate(&self, img: &TokenizedImage, present: &[usize]) -> Result<Vec<f64>, ModelError>;
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }

    fn n_classes(&self) -> usize {
        (**self).n_classes()
    }

    fn evaluate(&self, img: &TokenizedImage, present: &[usize]) -> Result<Vec<f64>, ModelError> {
        (**self).evaluate(img, present)
    }
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }

    fn n_classes(&self) -> usize {
        (**self).n_classes()
    }

    fn evaluate(&self, img: &TokenizedImage, present: &[usize]) -> Result<Vec<f64>, ModelError> {
        (**self).evaluate(img, present)
    }
}

pub(crate) fn validate_present(n_tokens: usize, present: &[usize]) -> Result<(), ModelError> {
    if present.is_empty() {
        return Err(ModelError::EmptyTokenSet);
    }
    let increasing = present.windows(2).all(|w| w[0] < w[1]);
    if !increasing || present[present.len() - 1] >= n_tokens {
        return Err(ModelError::BadTokenSet { n_tokens });
    }
    Ok(())
}

/// Evaluate `p` on `img` keeping only the tokens in `present`.
pub fn predict<P: Predictor + ?Sized>(p: &P, img: &TokenizedImage, present: &[usize]) -> Result<Vec<f64>, ModelError> {
    validate_present(img.n_tokens(), present)?;
    p.evaluate(img, present)
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |best, (i, &v)| {
                if v > best.1 {
                    (i, v)
                } else {
                    best
                }
            },
        )
        .0
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
