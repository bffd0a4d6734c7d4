//! Embedding smoothing: a shared map `g(x) = tanh(W x + b)` and one context
//! vector per place, trained so that `g(x_i)` predicts network neighbors
//! under negative sampling.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;

use super::network::{EdgeKind, PlaceNetwork};
use crate::error::{Error, Result};
use crate::math::{dot, log_sigmoid, sigmoid, sq_dist, stream_rng, Rng};
use crate::text_embed::SgdConfig;

/// Scale of the uniform noise added to the identity initialization of `W`.
pub const INIT_NOISE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingModel {
    pub dim: usize,
    /// Row-major `dim x dim`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    /// Row-major `n_places x dim`.
    pub context: Vec<f64>,
}

/// One training sample: center place, context place, sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingSample {
    pub center: usize,
    pub context: usize,
    /// `+1` for network neighbors, `-1` for negative samples.
    pub sign: f64,
}

impl SmoothingModel {
    /// `W = I + U(-INIT_NOISE, INIT_NOISE)`, zero bias, zero contexts.
    pub fn identity_init(dim: usize, n_places: usize, rng: &mut Rng) -> Self {
        let mut weight: Vec<f64> = (0..dim * dim)
            .map(|_| rng.random_range(-INIT_NOISE..INIT_NOISE))
            .collect();
        for i in 0..dim {
            weight[i * dim + i] += 1.0;
        }
        SmoothingModel {
            dim,
            weight,
            bias: vec![0.0; dim],
            context: vec![0.0; n_places * dim],
        }
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for (r, o) in out.iter_mut().enumerate() {
            *o = (dot(&self.weight[r * d..(r + 1) * d], x) + self.bias[r]).tanh();
        }
    }

    /// `g` applied to every row of `features`.
    pub fn apply_all(&self, features: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; features.len()];
        for (x, o) in features
            .chunks_exact(self.dim)
            .zip(out.chunks_exact_mut(self.dim))
        {
            self.apply(x, o);
        }
        out
    }

    pub fn context_vector(&self, c: usize) -> &[f64] {
        &self.context[c * self.dim..(c + 1) * self.dim]
    }
}

/// `-log sigma(sign * phi_c . g(x))`
pub fn sample_loss(model: &SmoothingModel, x: &[f64], context: usize, sign: f64) -> f64 {
    let mut h = vec![0.0; model.dim];
    model.apply(x, &mut h);
    -log_sigmoid(sign * dot(model.context_vector(context), &h))
}

/// Gradients of the summed loss of one center against several targets.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingGrad {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    /// One row per target, in input order.
    pub context: Vec<f64>,
}

/// Loss and gradients of `sum_t -log sigma(sign_t * phi_t . g(x))` where the
/// targets share one center feature `x`.
pub fn smoothing_loss_grad(
    model: &SmoothingModel,
    x: &[f64],
    targets: &[(usize, f64)],
) -> (f64, SmoothingGrad) {
    let d = model.dim;
    let mut h = vec![0.0; d];
    model.apply(x, &mut h);
    let mut grad_h = vec![0.0; d];
    let mut context = vec![0.0; targets.len() * d];
    let mut loss = 0.0;
    for (t, &(c, sign)) in targets.iter().enumerate() {
        let phi = model.context_vector(c);
        let s = dot(phi, &h);
        loss -= log_sigmoid(sign * s);
        let g = -sign * sigmoid(-sign * s);
        for k in 0..d {
            grad_h[k] += g * phi[k];
            context[t * d + k] = g * h[k];
        }
    }
    let dz: Vec<f64> = grad_h.iter().zip(&h).map(|(g, h)| g * (1.0 - h * h)).collect();
    let mut weight = vec![0.0; d * d];
    for r in 0..d {
        let row = &mut weight[r * d..(r + 1) * d];
        for (w, xi) in row.iter_mut().zip(x) {
            *w = dz[r] * xi;
        }
    }
    (
        loss,
        SmoothingGrad {
            weight,
            bias: dz,
            context,
        },
    )
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SmoothingLog {
    /// Mean per-sample loss for each epoch.
    pub epoch_loss: Vec<f64>,
    pub samples_per_epoch: usize,
}

#[derive(Debug, Clone)]
pub struct SmoothingOutcome {
    pub model: SmoothingModel,
    /// `g` applied to every input row.
    pub smoothed: Vec<f64>,
    pub log: SmoothingLog,
}

/// Trains the smoothing map on `features` (row-major `n x dim`, one row per
/// network node). Each epoch draws `n` positive edges, mixing coordinate and
/// category edges evenly when both exist, with `sgd.negatives` negatives per
/// positive from the degree^`sgd.noise_exponent` distribution.
pub fn train_smoothing(
    features: &[f64],
    dim: usize,
    network: &PlaceNetwork,
    sgd: &SgdConfig,
) -> Result<SmoothingOutcome> {
    sgd.validate()?;
    let n = network.len();
    if dim == 0 || features.len() != n * dim {
        return Err(Error::DimensionMismatch {
            expected: n * dim.max(1),
            actual: features.len(),
        });
    }
    let mut rng = stream_rng(sgd.seed, 0);
    let mut model = SmoothingModel::identity_init(dim, n, &mut rng);
    let mut log = SmoothingLog::default();

    let kinds: Vec<EdgeKind> = [EdgeKind::Coordinate, EdgeKind::Category]
        .into_iter()
        .filter(|&k| network.has_edges(k))
        .collect();
    if kinds.is_empty() {
        log::warn!("place network has no edges; smoothing has no signal");
        let smoothed = model.apply_all(features);
        return Ok(SmoothingOutcome {
            model,
            smoothed,
            log,
        });
    }
    let noise = WeightedIndex::new((0..n).map(|i| (network.degree(i) as f64).powf(sgd.noise_exponent)))
        .map_err(|e| Error::Config(format!("negative distribution: {e}")))?;

    let total = (n * sgd.epochs) as f64;
    let mut step = 0usize;
    let mut targets = Vec::with_capacity(sgd.negatives + 1);
    log.samples_per_epoch = n;
    for _ in 0..sgd.epochs {
        let mut epoch_loss = 0.0;
        let mut n_terms = 0usize;
        for _ in 0..n {
            let lr = sgd.learning_rate * (1.0 - step as f64 / total).max(1e-4);
            step += 1;
            let kind = kinds[rng.random_range(0..kinds.len())];
            let (center, context) = network
                .sample_edge(kind, &mut rng)
                .expect("edge kind checked non-empty");
            targets.clear();
            targets.push((context, 1.0));
            for _ in 0..sgd.negatives {
                targets.push((noise.sample(&mut rng), -1.0));
            }
            let x = &features[center * dim..(center + 1) * dim];
            let (loss, grad) = smoothing_loss_grad(&model, x, &targets);
            epoch_loss += loss;
            n_terms += targets.len();
            for (w, g) in model.weight.iter_mut().zip(&grad.weight) {
                *w -= lr * g;
            }
            for (b, g) in model.bias.iter_mut().zip(&grad.bias) {
                *b -= lr * g;
            }
            for (t, &(c, _)) in targets.iter().enumerate() {
                let row = &mut model.context[c * dim..(c + 1) * dim];
                for (p, g) in row.iter_mut().zip(&grad.context[t * dim..(t + 1) * dim]) {
                    *p -= lr * g;
                }
            }
        }
        log.epoch_loss.push(epoch_loss / n_terms as f64);
    }
    let smoothed = model.apply_all(features);
    Ok(SmoothingOutcome {
        model,
        smoothed,
        log,
    })
}

/// Mean Euclidean distance over same-bin pairs divided by the mean over all
/// pairs of places that have a coordinate.
pub fn same_bin_distance_ratio(features: &[f64], dim: usize, network: &PlaceNetwork) -> f64 {
    let row = |i: usize| &features[i * dim..(i + 1) * dim];
    let (mut same_sum, mut same_n) = (0.0, 0usize);
    for members in network.bins().values() {
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                same_sum += sq_dist(row(i), row(j)).sqrt();
                same_n += 1;
            }
        }
    }
    let located: Vec<usize> = (0..network.len()).filter(|&i| network.bin(i).is_some()).collect();
    let (mut all_sum, mut all_n) = (0.0, 0usize);
    for (a, &i) in located.iter().enumerate() {
        for &j in &located[a + 1..] {
            all_sum += sq_dist(row(i), row(j)).sqrt();
            all_n += 1;
        }
    }
    (same_sum / same_n as f64) / (all_sum / all_n as f64)
}
