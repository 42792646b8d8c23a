//! Independent reference implementations used by the integration and
//! acceptance tests. Each one is written from the definitions, sharing no
//! code paths with the library beyond plain data types.

#![allow(dead_code)]

use nalgebra::DMatrix;
use std::collections::BTreeMap;
use tsi_core::grid::{BoundingBox, OverlapRule, TokenGrid};
use tsi_core::metrics::TsiValue;
use tsi_core::model::{MiniVitConfig, MiniVitWeights};

// ---------------------------------------------------------------- vit

fn matrix(w: &tsi_core::model::Linear) -> DMatrix<f64> {
    DMatrix::from_row_slice(w.in_dim, w.out_dim, &w.weight)
}

fn affine(x: &DMatrix<f64>, w: &tsi_core::model::Linear) -> DMatrix<f64> {
    let mut y = x * matrix(w);
    for mut row in y.row_iter_mut() {
        for (v, b) in row.iter_mut().zip(&w.bias) {
            *v += b;
        }
    }
    y
}

fn layer_norm_rows(x: &DMatrix<f64>, gamma: &[f64], beta: &[f64]) -> DMatrix<f64> {
    let mut y = x.clone();
    for mut row in y.row_iter_mut() {
        let n = row.len() as f64;
        let mean = row.sum() / n;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let denom = (var + 1e-6).sqrt();
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - mean) / denom * gamma[j] + beta[j];
        }
    }
    y
}

fn softmax_rows(x: &mut DMatrix<f64>) {
    for mut row in x.row_iter_mut() {
        let m = row.max();
        row.iter_mut().for_each(|v| *v = (*v - m).exp());
        let s = row.sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
}

fn gelu_tanh(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

/// Class probabilities of the network restricted to `present` tokens, which
/// keep their own position embeddings.
pub fn vit_forward(cfg: &MiniVitConfig, w: &MiniVitWeights, tokens: &[Vec<f64>], present: &[usize]) -> Vec<f64> {
    let d = cfg.embed_dim;
    let n = present.len() + 1;
    let mut x = DMatrix::<f64>::zeros(n, d);
    for j in 0..d {
        x[(0, j)] = w.cls_token[j] + w.pos_embed[0][j];
    }
    let pe = matrix(&w.patch_embed);
    for (row, &k) in present.iter().enumerate() {
        let t = DMatrix::from_row_slice(1, tokens[k].len(), &tokens[k]);
        let e = t * &pe;
        for j in 0..d {
            x[(row + 1, j)] = e[(0, j)] + w.patch_embed.bias[j] + w.pos_embed[k + 1][j];
        }
    }

    let hd = d / cfg.n_heads;
    for b in &w.blocks {
        let h = layer_norm_rows(&x, &b.norm1.gamma, &b.norm1.beta);
        let (q, k, v) = (affine(&h, &b.query), affine(&h, &b.key), affine(&h, &b.value));
        let mut mixed = DMatrix::<f64>::zeros(n, d);
        for head in 0..cfg.n_heads {
            let qh = q.columns(head * hd, hd);
            let kh = k.columns(head * hd, hd);
            let vh = v.columns(head * hd, hd);
            let mut a = qh * kh.transpose() / (hd as f64).sqrt();
            softmax_rows(&mut a);
            mixed.columns_mut(head * hd, hd).copy_from(&(a * vh));
        }
        x += affine(&mixed, &b.proj);
        let h2 = layer_norm_rows(&x, &b.norm2.gamma, &b.norm2.beta);
        let hidden = affine(&h2, &b.fc1).map(gelu_tanh);
        x += affine(&hidden, &b.fc2);
    }
    let cls = layer_norm_rows(&x.rows(0, 1).into_owned(), &w.final_norm.gamma, &w.final_norm.beta);
    let mut logits = affine(&cls, &w.head);
    softmax_rows(&mut logits);
    logits.row(0).iter().copied().collect()
}

// ---------------------------------------------------------------- geometry

/// Inside mask by visiting every pixel (any-overlap) or every token center
/// (center-point); `None` when no box keeps any area inside the image.
pub fn raster_mask(grid: &TokenGrid, boxes: &[BoundingBox], rule: OverlapRule) -> Option<Vec<bool>> {
    let (w, h, p) = (
        i64::from(grid.image_width()),
        i64::from(grid.image_height()),
        i64::from(grid.patch_size()),
    );
    let survives = |b: &BoundingBox| b.x_min.max(0) < b.x_max.min(w) && b.y_min.max(0) < b.y_max.min(h);
    if !boxes.iter().any(survives) {
        return None;
    }
    let cols = (w / p) as usize;
    let mut mask = vec![false; grid.n_tokens()];
    match rule {
        OverlapRule::AnyOverlap => {
            for y in 0..h {
                for x in 0..w {
                    if boxes
                        .iter()
                        .any(|b| b.x_min <= x && x < b.x_max && b.y_min <= y && y < b.y_max)
                    {
                        mask[(y / p) as usize * cols + (x / p) as usize] = true;
                    }
                }
            }
        }
        OverlapRule::CenterPoint => {
            for (k, m) in mask.iter_mut().enumerate() {
                let (r, c) = ((k / cols) as i64, (k % cols) as i64);
                // doubled coordinates keep half-pixel centers integral
                let (cx, cy) = (2 * c * p + p, 2 * r * p + p);
                *m = boxes
                    .iter()
                    .filter(|b| survives(b))
                    .any(|b| 2 * b.x_min <= cx && cx < 2 * b.x_max && 2 * b.y_min <= cy && cy < 2 * b.y_max);
            }
        }
    }
    Some(mask)
}

// ---------------------------------------------------------------- metrics

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Expected {
    Finite(f64),
    Infinite,
    Undefined,
}

impl Expected {
    pub fn matches(self, got: TsiValue, rel_tol: f64) -> bool {
        match (self, got) {
            (Expected::Finite(a), TsiValue::Finite(b)) => (a - b).abs() <= rel_tol * a.abs().max(f64::MIN_POSITIVE),
            (Expected::Infinite, TsiValue::Infinite) | (Expected::Undefined, TsiValue::Undefined) => true,
            _ => false,
        }
    }
}

fn ratio(out: f64, inn: f64) -> Expected {
    if inn > 0.0 {
        Expected::Finite(out / inn)
    } else if out > 0.0 {
        Expected::Infinite
    } else {
        Expected::Undefined
    }
}

/// (A-TSI, M-TSI) straight from the definitions.
pub fn tsi_oracle(scores: &[f64], inside: &[bool]) -> (Expected, Expected) {
    let mut sum_in = 0.0;
    let mut sum_out = 0.0;
    let mut n_in = 0usize;
    let mut n_out = 0usize;
    let mut max_in = 0.0f64;
    let mut max_out = 0.0f64;
    for i in 0..scores.len() {
        if inside[i] {
            sum_in += scores[i];
            n_in += 1;
            if scores[i] > max_in {
                max_in = scores[i];
            }
        } else {
            sum_out += scores[i];
            n_out += 1;
            if scores[i] > max_out {
                max_out = scores[i];
            }
        }
    }
    if n_in == 0 || n_out == 0 {
        return (Expected::Undefined, Expected::Undefined);
    }
    let a = ratio(sum_out / n_out as f64, sum_in / n_in as f64);
    let m = ratio(max_out, max_in);
    (a, m)
}

// ---------------------------------------------------------------- statistics

/// Two-pass mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Correlation from the least-squares slopes: r^2 = b_yx * b_xy.
pub fn regression_r(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let (sx, sy): (f64, f64) = (xs.iter().sum(), ys.iter().sum());
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let syy: f64 = ys.iter().map(|y| y * y).sum();
    let cov = sxy - sx * sy / n;
    let vx = sxx - sx * sx / n;
    let vy = syy - sy * sy / n;
    let slope_yx = cov / vx;
    let slope_xy = cov / vy;
    let r2 = slope_yx * slope_xy;
    (r2.sqrt().copysign(cov), r2)
}

/// Histogram counts by linear scan over the bin list.
pub fn histogram(values: &[TsiValue], bin_width: f64, clamp: f64) -> (Vec<usize>, usize, usize) {
    let n_bins = (clamp / bin_width).round() as usize;
    let edges: Vec<f64> = (0..n_bins).map(|i| i as f64 * bin_width).chain([clamp]).collect();
    let mut counts = vec![0; n_bins];
    let (mut overflow, mut undefined) = (0, 0);
    for v in values {
        match *v {
            TsiValue::Undefined => undefined += 1,
            TsiValue::Infinite => overflow += 1,
            TsiValue::Finite(x) if x >= clamp => overflow += 1,
            TsiValue::Finite(x) => {
                let bin = (0..n_bins).find(|&i| edges[i] <= x && x < edges[i + 1]).unwrap_or(0);
                counts[bin] += 1;
            }
        }
    }
    (counts, overflow, undefined)
}

/// Group finite values by key and summarize each group.
pub fn regroup<K: Ord + Clone>(items: &[(K, Option<f64>)]) -> BTreeMap<K, (usize, f64, f64)> {
    let mut groups: BTreeMap<K, Vec<f64>> = BTreeMap::new();
    for (k, v) in items {
        if let Some(v) = v {
            groups.entry(k.clone()).or_default().push(*v);
        }
    }
    groups
        .into_iter()
        .map(|(k, vs)| {
            let (m, s) = mean_std(&vs);
            (k, (vs.len(), m, s))
        })
        .collect()
}
