//! Adaptive intra-class variation contrastive learning for unsupervised
//! re-identification, on synthetic feature vectors.
//!
//! The pipeline clusters teacher embeddings with DBSCAN, keeps a momentum
//! memory of cluster centroids plus an adaptively admitted outlier bank, and
//! trains a small encoder with a hybrid contrastive loss and mean-teacher
//! distillation.

pub mod adaptive;
pub mod cli;
pub mod clusterer;
pub mod encoder;
pub mod error;
pub mod evalkit;
pub mod loss;
pub mod memory;
pub mod numcore;
pub mod synthgen;
pub mod trainer;

pub use error::{Error, Result};
