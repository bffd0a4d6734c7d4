//! Supervised metric learning over place features: contrastive pair loss
//! (or triplet loss), batch-wise hard sampling, source attention and
//! soft-clustering label denoising. All gradients are hand-derived.

mod checkpoint;
mod denoise;
mod loss;
mod model;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use denoise::{
    denoise_loss, init_centers, soft_assign, soft_assign_all, target_dist, DenoisingState,
    KL_EPSILON, LLOYD_MAX_ITERS,
};
pub use loss::{
    attention_weights, distance, hard_select, loss_distance, pair_loss, pair_loss_grad,
    signed_score, softmax, source_scores, triplet_loss,
};
pub use model::{Dense, DistanceKind, LossKind, MetricModel, ModelShape, Params};
pub use train::{
    batch_objective, resolve_pairs, train, Batch, BatchResult, DenoiseBatch, Selection,
    TrainConfig, TrainLog, TrainOutcome, TrainPair, Triplet,
};
