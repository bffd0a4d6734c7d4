//! Place network over coordinates and categories, and embedding smoothing
//! on that network.

mod network;
mod smoothing;

pub use network::{bin_of, build_network, Bin, EdgeKind, PlaceNetwork};
pub use smoothing::{
    same_bin_distance_ratio, sample_loss, smoothing_loss_grad, train_smoothing, SmoothingGrad,
    SmoothingLog, SmoothingModel, SmoothingOutcome, SmoothingSample, INIT_NOISE,
};

/// Default grid bin size in degrees.
pub const DEFAULT_BIN_SIZE: f64 = 0.01;
