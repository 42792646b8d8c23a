//! Pipeline configuration, loaded from TOML and overridden by flags.

use crate::error::{CliError, CliResult};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use tsi_core::dataset::{CoverageThreshold, PartitionConfig};
use tsi_core::grid::OverlapRule;
use tsi_core::model::MiniVitConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub patch_size: u32,
    pub overlap: OverlapRule,
    /// Large-box threshold as `N/D` of the token count.
    pub threshold: String,
    pub bin_width: f64,
    pub clamp: f64,
    pub seed: u64,
    pub ns: Vec<usize>,
    pub top_k: Vec<usize>,
    pub top_classes: usize,
    pub planted_weight: f64,
    pub vit_embed_dim: usize,
    pub vit_heads: usize,
    pub vit_layers: usize,
    pub vit_classes: usize,
    /// Not part of the provenance hash: output never depends on it.
    #[serde(skip_serializing)]
    pub workers: usize,
    #[serde(skip_serializing)]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing)]
    pub output: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let vit = MiniVitConfig::default();
        Self {
            patch_size: vit.grid.patch_size(),
            overlap: OverlapRule::AnyOverlap,
            threshold: CoverageThreshold::default().to_string(),
            bin_width: 0.1,
            clamp: 2.0,
            seed: 7,
            ns: vec![1, 3, 5, 10, 20],
            top_k: vec![],
            top_classes: 10,
            planted_weight: 4.0,
            vit_embed_dim: vit.embed_dim,
            vit_heads: vit.n_heads,
            vit_layers: vit.n_layers,
            vit_classes: vit.n_classes,
            workers: 1,
            input: None,
            output: None,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::input(m));
        if self.patch_size == 0 {
            return bad("patch_size must be positive".into());
        }
        self.threshold()?;
        if !(self.bin_width > 0.0 && self.clamp > 0.0) {
            return bad("bin_width and clamp must be positive".into());
        }
        if self.ns.contains(&0) || self.top_k.contains(&0) {
            return bad("token counts must be positive".into());
        }
        if self.planted_weight.is_nan() || self.planted_weight <= 0.0 {
            return bad("planted_weight must be positive".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        self.vit_config(
            tsi_core::grid::TokenGrid::new(self.patch_size, self.patch_size, self.patch_size)
                .map_err(CliError::input)?,
            3,
        )
        .map(|_| ())
    }

    pub fn threshold(&self) -> CliResult<CoverageThreshold> {
        self.threshold.parse().map_err(CliError::input)
    }

    pub fn partition(&self) -> CliResult<PartitionConfig> {
        Ok(PartitionConfig {
            overlap: self.overlap,
            threshold: self.threshold()?,
        })
    }

    pub fn vit_config(&self, grid: tsi_core::grid::TokenGrid, channels: usize) -> CliResult<MiniVitConfig> {
        let cfg = MiniVitConfig {
            grid,
            channels,
            embed_dim: self.vit_embed_dim,
            n_heads: self.vit_heads,
            n_layers: self.vit_layers,
            n_classes: self.vit_classes,
            ..MiniVitConfig::default()
        };
        if cfg.embed_dim == 0 || cfg.n_heads == 0 || !cfg.embed_dim.is_multiple_of(cfg.n_heads) {
            return Err(CliError::input(format!(
                "vit_embed_dim {} must be a positive multiple of vit_heads {}",
                cfg.embed_dim, cfg.n_heads
            )));
        }
        Ok(cfg)
    }

    /// First 16 hex digits of the SHA-256 of the hashed fields as JSON.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn provenance_json(&self) -> serde_json::Value {
        serde_json::json!({
            "provenance": {
                "tool": "tsi",
                "version": env!("CARGO_PKG_VERSION"),
                "config_hash": self.hash(),
                "config": self,
            }
        })
    }
}
