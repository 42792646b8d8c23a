//! Detecting regional spurious correlations in patch-token classifiers.
//!
//! Each token of an image is discarded in turn and the change in the target
//! class confidence is recorded as that token's influence. Comparing influence
//! inside and outside an annotated region gives two spuriosity indices:
//!
//! * **A-TSI**, mean influence outside over mean influence inside;
//! * **M-TSI**, max influence outside over max influence inside.
//!
//! Values above 1 flag predictions driven by tokens outside the object.
//!
//! Modules follow the pipeline: [`grid`] maps boxes to token partitions,
//! [`model`] holds the predictor interface and bundled models, [`influence`]
//! computes score maps, [`metrics`] scores them, [`dataset`] loads corpora and
//! splits them into subsets, and [`analysis`] aggregates everything.

pub mod analysis;
pub mod dataset;
pub mod grid;
pub mod influence;
pub mod metrics;
pub mod model;
pub mod pnm;
pub mod render;

pub use grid::{bbox_to_partition, BoundingBox, OverlapRule, TokenGrid, TokenPartition};
pub use influence::{compute_influence_map, InfluenceEngine, InfluenceMap, ScoreKind};
pub use metrics::{a_tsi, m_tsi, tsi_scores, TsiScores, TsiValue};
pub use model::{predict, tokenize, Predictor, TokenizedImage};
