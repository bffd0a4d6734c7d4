//! End-to-end pipeline over on-disk stage artifacts, plus the in-process
//! building blocks the stages share.

mod config;
mod features;
mod stages;

pub use config::{EvalTarget, PipelineConfig, Preset, DEFAULT_OUT_DIR, OUT_DIR_ENV};
pub use features::{
    address_tokens, bin_distance_ratio, build_features, name_tokens, place_network,
    smooth_features, FeatureConfig, PlaceFeatures, SmoothConfig,
};
pub use stages::*;
