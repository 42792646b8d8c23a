//! A small pre-norm vision transformer with deterministic seeded weights.
//!
//! The input sequence is `[cls, tokens in present order]`, each token carrying
//! its own positional embedding, so discarding a token shortens the sequence
//! without shifting the positions of the others.

use super::{softmax, ModelError, Predictor, TokenizedImage};
use crate::grid::TokenGrid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LAYER_NORM_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct MiniVitConfig {
    pub grid: TokenGrid,
    pub channels: usize,
    pub embed_dim: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub n_classes: usize,
    pub mlp_ratio: usize,
    /// Half-width of the uniform weight initialization interval.
    pub init_scale: f64,
    /// When false, positional embeddings are zero.
    pub positional: bool,
}

impl Default for MiniVitConfig {
    fn default() -> Self {
        Self {
            grid: TokenGrid::new(32, 32, 8).expect("static grid"),
            channels: 3,
            embed_dim: 32,
            n_heads: 4,
            n_layers: 2,
            n_classes: 10,
            mlp_ratio: 4,
            init_scale: 0.05,
            positional: true,
        }
    }
}

impl MiniVitConfig {
    pub fn feature_len(&self) -> usize {
        let p = self.grid.patch_size() as usize;
        p * p * self.channels
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.n_heads
    }

    fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.embed_dim == 0 || self.n_heads == 0 || self.n_layers == 0 {
            return bad("embed_dim, n_heads and n_layers must be positive".into());
        }
        if !self.embed_dim.is_multiple_of(self.n_heads) {
            return bad(format!(
                "embed_dim {} not divisible by n_heads {}",
                self.embed_dim, self.n_heads
            ));
        }
        if self.n_classes < 2 {
            return bad("need at least two classes".into());
        }
        if self.channels == 0 || self.mlp_ratio == 0 {
            return bad("channels and mlp_ratio must be positive".into());
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return bad(format!("init_scale must be positive, got {}", self.init_scale));
        }
        Ok(())
    }
}

/// Dense layer stored as `weight[i * out_dim + o]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    fn seeded(rng: &mut ChaCha8Rng, in_dim: usize, out_dim: usize, scale: f64) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: uniform_vec(rng, in_dim * out_dim, scale),
            bias: vec![0.0; out_dim],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.bias.clone();
        for (i, &xi) in x.iter().enumerate() {
            let row = &self.weight[i * self.out_dim..(i + 1) * self.out_dim];
            for (o, &w) in out.iter_mut().zip(row) {
                *o += xi * w;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl LayerNorm {
    fn identity(dim: usize) -> Self {
        Self {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        x.iter()
            .zip(self.gamma.iter().zip(&self.beta))
            .map(|(v, (g, b))| (v - mean) * inv * g + b)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeights {
    pub norm1: LayerNorm,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub proj: Linear,
    pub norm2: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
}

/// All parameters of a [`MiniVit`]. Exposed so that tests can re-implement
/// the forward pass independently.
#[derive(Debug, Clone, PartialEq)]
pub struct MiniVitWeights {
    pub patch_embed: Linear,
    pub cls_token: Vec<f64>,
    /// Row 0 belongs to the classification token, row `k + 1` to image token `k`.
    pub pos_embed: Vec<Vec<f64>>,
    pub blocks: Vec<BlockWeights>,
    pub final_norm: LayerNorm,
    pub head: Linear,
}

fn uniform_vec(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-scale..=scale)).collect()
}

impl MiniVitWeights {
    fn seeded(config: &MiniVitConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.embed_dim;
        let s = config.init_scale;
        let patch_embed = Linear::seeded(&mut rng, config.feature_len(), d, s);
        let cls_token = uniform_vec(&mut rng, d, s);
        let pos_embed = (0..=config.grid.n_tokens())
            .map(|_| {
                let row = uniform_vec(&mut rng, d, s);
                if config.positional {
                    row
                } else {
                    vec![0.0; d]
                }
            })
            .collect();
        let hidden = d * config.mlp_ratio;
        let blocks = (0..config.n_layers)
            .map(|_| BlockWeights {
                norm1: LayerNorm::identity(d),
                query: Linear::seeded(&mut rng, d, d, s),
                key: Linear::seeded(&mut rng, d, d, s),
                value: Linear::seeded(&mut rng, d, d, s),
                proj: Linear::seeded(&mut rng, d, d, s),
                norm2: LayerNorm::identity(d),
                fc1: Linear::seeded(&mut rng, d, hidden, s),
                fc2: Linear::seeded(&mut rng, hidden, d, s),
            })
            .collect();
        let final_norm = LayerNorm::identity(d);
        let head = Linear::seeded(&mut rng, d, config.n_classes, s);
        Self {
            patch_embed,
            cls_token,
            pos_embed,
            blocks,
            final_norm,
            head,
        }
    }
}

pub(crate) fn gelu(x: f64) -> f64 {
    const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + 0.044_715 * x * x * x)).tanh())
}

/// Final-layer attention of the classification token over image tokens,
/// averaged over heads.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    pub image_id: String,
    pub model_id: String,
    pub grid: TokenGrid,
    /// One nonnegative weight per image token (the classification token's
    /// self-attention is not included, so these sum to at most 1).
    pub weights: Vec<f64>,
}

impl AttentionMap {
    /// Weights rescaled to sum to 1 over image tokens.
    pub fn renormalized(&self) -> Vec<f64> {
        let total: f64 = self.weights.iter().sum();
        self.weights.iter().map(|w| w / total).collect()
    }
}

#[derive(Debug, Clone)]
pub struct MiniVit {
    model_id: String,
    seed: u64,
    config: MiniVitConfig,
    weights: MiniVitWeights,
}

/// Build a mini ViT whose weights are a pure function of `seed`.
pub fn mini_vit_new(seed: u64, config: MiniVitConfig) -> Result<MiniVit, ModelError> {
    MiniVit::new(format!("mini-vit-{seed}"), seed, config)
}

impl MiniVit {
    pub fn new(model_id: impl Into<String>, seed: u64, config: MiniVitConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let weights = MiniVitWeights::seeded(&config, seed);
        Ok(Self {
            model_id: model_id.into(),
            seed,
            config,
            weights,
        })
    }

    pub fn config(&self) -> &MiniVitConfig {
        &self.config
    }

    pub fn weights(&self) -> &MiniVitWeights {
        &self.weights
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn check_input(&self, img: &TokenizedImage) -> Result<(), ModelError> {
        if img.grid != self.config.grid {
            return Err(ModelError::GridMismatch {
                got: img.grid,
                expected: self.config.grid,
            });
        }
        if img.feature_len() != self.config.feature_len() {
            return Err(ModelError::FeatureMismatch {
                got: img.feature_len(),
                expected: self.config.feature_len(),
            });
        }
        Ok(())
    }

    /// Runs the network, returning class probabilities and the last layer's
    /// head-averaged classification-token attention row (length `present.len() + 1`).
    fn forward(&self, img: &TokenizedImage, present: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let w = &self.weights;
        let mut seq: Vec<Vec<f64>> = Vec::with_capacity(present.len() + 1);
        seq.push(add(&w.cls_token, &w.pos_embed[0]));
        for &k in present {
            let emb = w.patch_embed.apply(img.token(k));
            seq.push(add(&emb, &w.pos_embed[k + 1]));
        }

        let mut cls_attention = Vec::new();
        for block in &w.blocks {
            let (attended, att) = self.attention(block, &seq);
            cls_attention = att;
            for (x, a) in seq.iter_mut().zip(&attended) {
                add_assign(x, a);
            }
            for x in seq.iter_mut() {
                let h = block.norm2.apply(x);
                let hidden: Vec<f64> = block.fc1.apply(&h).into_iter().map(gelu).collect();
                let out = block.fc2.apply(&hidden);
                add_assign(x, &out);
            }
        }

        let cls = w.final_norm.apply(&seq[0]);
        (softmax(&w.head.apply(&cls)), cls_attention)
    }

    fn attention(&self, block: &BlockWeights, seq: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let n_heads = self.config.n_heads;
        let hd = self.config.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();
        let normed: Vec<Vec<f64>> = seq.iter().map(|x| block.norm1.apply(x)).collect();
        let q: Vec<Vec<f64>> = normed.iter().map(|x| block.query.apply(x)).collect();
        let k: Vec<Vec<f64>> = normed.iter().map(|x| block.key.apply(x)).collect();
        let v: Vec<Vec<f64>> = normed.iter().map(|x| block.value.apply(x)).collect();

        let n = seq.len();
        let mut mixed = vec![vec![0.0; self.config.embed_dim]; n];
        let mut cls_row = vec![0.0; n];
        for h in 0..n_heads {
            let span = h * hd..(h + 1) * hd;
            for i in 0..n {
                let scores: Vec<f64> = (0..n)
                    .map(|j| dot(&q[i][span.clone()], &k[j][span.clone()]) * scale)
                    .collect();
                let probs = softmax(&scores);
                if i == 0 {
                    for (acc, p) in cls_row.iter_mut().zip(&probs) {
                        *acc += p / n_heads as f64;
                    }
                }
                let out = &mut mixed[i][span.clone()];
                for (j, p) in probs.iter().enumerate() {
                    for (o, vj) in out.iter_mut().zip(&v[j][span.clone()]) {
                        *o += p * vj;
                    }
                }
            }
        }
        let projected = mixed.iter().map(|m| block.proj.apply(m)).collect();
        (projected, cls_row)
    }

    /// Classification-token attention over all image tokens from the last layer.
    pub fn attention_map(&self, img: &TokenizedImage) -> Result<AttentionMap, ModelError> {
        self.check_input(img)?;
        let (_, row) = self.forward(img, &img.all_tokens());
        Ok(AttentionMap {
            image_id: img.image_id.clone(),
            model_id: self.model_id.clone(),
            grid: img.grid,
            weights: row[1..].to_vec(),
        })
    }
}

impl Predictor for MiniVit {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn n_classes(&self) -> usize {
        self.config.n_classes
    }

    fn evaluate(&self, img: &TokenizedImage, present: &[usize]) -> Result<Vec<f64>, ModelError> {
        self.check_input(img)?;
        Ok(self.forward(img, present).0)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn add_assign(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}
