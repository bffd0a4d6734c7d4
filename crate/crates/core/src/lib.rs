//! Place deduplication with embeddings.
//!
//! Turns ad-hoc place attributes (name, address, coordinate, categories) into
//! fixed-size vectors in two stages:
//!
//! 1. unsupervised feature generation ([`text_embed`], [`graph_smooth`]):
//!    skip-gram name and address embeddings, refined by smoothing over a
//!    coordinate/category place network;
//! 2. supervised metric learning ([`metric_learn`]) from noisy multi-source
//!    pair labels, with batch-wise hard sampling, source-oriented attention
//!    and soft-clustering label denoising.
//!
//! [`eval`] scores embeddings by pairwise accuracy and PRE@K/REC@K, and
//! [`pipeline`] wires the stages together over on-disk artifacts.

pub mod error;
pub mod eval;
pub mod graph_smooth;
pub mod math;
pub mod metric_learn;
pub mod pipeline;
pub mod place_model;
pub mod text_embed;

pub use error::{Error, Result};
