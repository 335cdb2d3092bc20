//! Auto-vocabulary segmentation of 3D point clouds.
//!
//! The pipeline splits a cloud into geometric masks (sectors, pillars, or
//! camera-visibility sets), pools one feature vector per mask with sparse
//! masked attention, decodes pooled features into text tags against a
//! deterministic synthetic embedding space, and labels every point by
//! feature similarity against the resulting vocabulary. Evaluation covers
//! an annotation-free point-semantic score as well as mapped IoU against
//! ground truth.

pub mod captioning;
pub mod embedding;
pub mod error;
pub mod geometry;
pub mod metrics;
mod rng;
pub mod scene;
pub mod segmenter;
pub mod smap;

pub use error::{Error, Result};
