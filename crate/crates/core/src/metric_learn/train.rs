use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::denoise::{denoise_row_grad, init_centers, DenoisingState};
use super::loss::{loss_distance, loss_distance_grad, hard_select, pair_loss, pair_loss_grad, softmax, source_scores};
use super::model::{DistanceKind, ForwardCache, LossKind, MetricModel, ModelShape, Params};
use crate::error::{Error, Result};
use crate::math::stream_rng;
use crate::place_model::LabeledPair;
use crate::text_embed::KeyedVectors;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub distance: DistanceKind,
    pub hidden: Vec<usize>,
    pub key_dim: usize,
    pub value_dim: usize,
    pub alpha: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hard_sampling: bool,
    pub beta: f64,
    pub attention: bool,
    pub denoising: bool,
    pub rho: f64,
    /// Cluster count; `None` uses the square root of the place count.
    pub clusters: Option<usize>,
    pub refresh_interval: usize,
    pub warmup_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossKind::Pairwise,
            distance: DistanceKind::Euclidean,
            hidden: vec![64, 64],
            key_dim: 16,
            value_dim: 32,
            alpha: 1.0,
            learning_rate: 0.01,
            momentum: 0.9,
            epochs: 20,
            batch_size: 128,
            hard_sampling: false,
            beta: 1.0,
            attention: false,
            denoising: false,
            rho: 0.5,
            clusters: None,
            refresh_interval: 100,
            warmup_epochs: 1,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if self.batch_size < 2 {
            return bad(format!("batch size must be at least 2, got {}", self.batch_size));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return bad(format!("beta must be nonnegative, got {}", self.beta));
        }
        if !(self.rho.is_finite() && self.rho >= 0.0) {
            return bad(format!("rho must be nonnegative, got {}", self.rho));
        }
        if self.refresh_interval == 0 {
            return bad("refresh interval must be positive".into());
        }
        if self.clusters == Some(0) {
            return bad("cluster count must be positive".into());
        }
        if self.loss == LossKind::Triplet && (self.hard_sampling || self.attention) {
            return bad("hard sampling and attention apply to the pairwise loss only".into());
        }
        Ok(())
    }

    fn shape(&self, input_dim: usize) -> ModelShape {
        ModelShape {
            input_dim,
            hidden: self.hidden.clone(),
            key_dim: self.key_dim,
            value_dim: self.value_dim,
        }
    }
}

/// A labeled pair resolved to feature rows and a source index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainPair {
    pub a: usize,
    pub b: usize,
    pub y: f64,
    pub source: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selection<'a> {
    All,
    /// Hard sampling with slack `beta`.
    Hard(f64),
    /// Precomputed pair indices.
    Fixed(&'a [usize]),
}

#[derive(Debug, Clone, Copy)]
pub struct DenoiseBatch<'a> {
    pub nodes: &'a [usize],
    /// Row-major `nodes.len() x k` targets, treated as constants.
    pub targets: &'a [f64],
    /// Row-major `k x value_dim`.
    pub centers: &'a [f64],
    pub rho: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub pairs: &'a [TrainPair],
    pub triplets: &'a [Triplet],
    pub selection: Selection<'a>,
    pub attention: bool,
    pub denoise: Option<DenoiseBatch<'a>>,
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    /// Pair (or triplet) loss plus denoising loss.
    pub loss: f64,
    pub pair_loss: f64,
    pub denoise_loss: f64,
    /// Mean unweighted pair loss over the whole batch before selection.
    pub raw_pair_loss: f64,
    pub selected: Vec<usize>,
    pub grads: Params,
    pub center_grads: Vec<f64>,
}

/// Batch objective and its gradient with respect to every parameter.
///
/// Pairwise: sum over selected pairs of `w * pair_loss`, divided by the
/// batch size, where `w` is the pair's attention weight times the number of
/// sources (so uniform attention gives weight 1) or 1 without attention. Triplet: mean hinge over
/// the triplets. Denoising adds the mean `rho KL(c || d)` over its nodes.
pub fn batch_objective(model: &MetricModel, features: &[f64], batch: &Batch) -> BatchResult {
    let dim = model.shape.input_dim;
    let mut slots: HashMap<usize, usize> = HashMap::new();
    let mut caches: Vec<ForwardCache> = Vec::new();
    let mut touch = |i: usize, caches: &mut Vec<ForwardCache>| -> usize {
        *slots.entry(i).or_insert_with(|| {
            caches.push(model.forward_cached(&features[i * dim..(i + 1) * dim]));
            caches.len() - 1
        })
    };
    let pair_slots: Vec<(usize, usize)> = batch
        .pairs
        .iter()
        .map(|p| (touch(p.a, &mut caches), touch(p.b, &mut caches)))
        .collect();
    let triplet_slots: Vec<[usize; 3]> = batch
        .triplets
        .iter()
        .map(|t| {
            [
                touch(t.anchor, &mut caches),
                touch(t.positive, &mut caches),
                touch(t.negative, &mut caches),
            ]
        })
        .collect();
    let denoise_slots: Vec<usize> = batch
        .denoise
        .map(|d| d.nodes.iter().map(|&i| touch(i, &mut caches)).collect())
        .unwrap_or_default();

    let (dk, dv) = (model.shape.key_dim, model.shape.value_dim);
    let m = model.params.bilinear.as_deref();
    let kind = model.distance;
    let alpha = model.alpha;
    let mut grads = Params::zeros_like(&model.params);
    let mut grad_value = vec![vec![0.0; dv]; caches.len()];
    let mut grad_key = vec![vec![0.0; dk]; caches.len()];
    let mut key_used = vec![false; caches.len()];

    let dists: Vec<f64> = pair_slots
        .iter()
        .map(|&(sa, sb)| loss_distance(&caches[sa].value, &caches[sb].value, kind, m))
        .collect();
    let raw_pair_loss = if dists.is_empty() {
        0.0
    } else {
        dists
            .iter()
            .zip(batch.pairs)
            .map(|(&d, p)| pair_loss(d, p.y, alpha))
            .sum::<f64>()
            / dists.len() as f64
    };

    let mut pair_total = 0.0;
    let mut selected = Vec::new();
    if model.loss == LossKind::Pairwise && !batch.pairs.is_empty() {
        selected = match batch.selection {
            Selection::All => (0..batch.pairs.len()).collect(),
            Selection::Hard(beta) => {
                let scored: Vec<(f64, f64)> =
                    dists.iter().zip(batch.pairs).map(|(&d, p)| (d, p.y)).collect();
                hard_select(&scored, beta)
            }
            Selection::Fixed(idx) => idx.to_vec(),
        };
        // Unselected pairs count as zero loss, so the scale matches `All`.
        let n_sel = batch.pairs.len() as f64;
        let n_src = model.sources.len() as f64;
        for &l in &selected {
            let p = batch.pairs[l];
            let (sa, sb) = pair_slots[l];
            let d = dists[l];
            let ell = pair_loss(d, p.y, alpha);
            let mut w = 1.0;
            if batch.attention {
                let ka = &caches[sa].key;
                let kb = &caches[sb].key;
                let probs = softmax(&source_scores(ka, kb, &model.params.q));
                w = n_src * probs[p.source];
                // d(w * ell)/d score_s' = n_src * ell * p_s (delta - p_s')
                let base = n_src * ell * probs[p.source] / n_sel;
                let mut ga = vec![0.0; dk];
                let mut gb = vec![0.0; dk];
                for (s2, &ps2) in probs.iter().enumerate() {
                    let delta = if s2 == p.source { 1.0 } else { 0.0 };
                    let gz = base * (delta - ps2);
                    if gz == 0.0 {
                        continue;
                    }
                    let q = model.q(s2);
                    let gq = &mut grads.q[s2 * 2 * dk..(s2 + 1) * 2 * dk];
                    for j in 0..dk {
                        gq[j] += gz * ka[j];
                        gq[dk + j] += gz * kb[j];
                        ga[j] += gz * q[j];
                        gb[j] += gz * q[dk + j];
                    }
                }
                for j in 0..dk {
                    grad_key[sa][j] += ga[j];
                    grad_key[sb][j] += gb[j];
                }
                key_used[sa] = true;
                key_used[sb] = true;
            }
            pair_total += w * ell / n_sel;
            let gd = w * pair_loss_grad(d, p.y, alpha) / n_sel;
            if gd != 0.0 {
                accumulate_distance_grad(
                    &caches, sa, sb, kind, m, gd, &mut grad_value, grads.bilinear.as_deref_mut(),
                );
            }
        }
    }

    if model.loss == LossKind::Triplet && !batch.triplets.is_empty() {
        let n = batch.triplets.len() as f64;
        for &[sa, sp, sn] in &triplet_slots {
            let d_ap = loss_distance(&caches[sa].value, &caches[sp].value, kind, m);
            let d_an = loss_distance(&caches[sa].value, &caches[sn].value, kind, m);
            let h = d_ap - d_an + alpha;
            if h > 0.0 {
                pair_total += h / n;
                let mut gm = grads.bilinear.as_deref_mut();
                accumulate_distance_grad(&caches, sa, sp, kind, m, 1.0 / n, &mut grad_value, gm.as_deref_mut());
                accumulate_distance_grad(&caches, sa, sn, kind, m, -1.0 / n, &mut grad_value, gm);
            }
        }
    }

    let mut denoise_total = 0.0;
    let mut center_grads = Vec::new();
    if let Some(dn) = batch.denoise {
        center_grads = vec![0.0; dn.centers.len()];
        let k = dn.centers.len() / dv;
        let n = dn.nodes.len() as f64;
        for (r, &slot) in denoise_slots.iter().enumerate() {
            let c = &dn.targets[r * k..(r + 1) * k];
            denoise_total += denoise_row_grad(
                &caches[slot].value,
                dn.centers,
                c,
                dn.rho,
                1.0 / n,
                &mut grad_value[slot],
                &mut center_grads,
            ) / n;
        }
    }

    for (slot, cache) in caches.iter().enumerate() {
        let gk = key_used[slot].then_some(&grad_key[slot][..]);
        if gk.is_none() && grad_value[slot].iter().all(|&g| g == 0.0) {
            continue;
        }
        model.backward(cache, gk, &grad_value[slot], &mut grads);
    }

    BatchResult {
        loss: pair_total + denoise_total,
        pair_loss: pair_total,
        denoise_loss: denoise_total,
        raw_pair_loss,
        selected,
        grads,
        center_grads,
    }
}

#[allow(clippy::too_many_arguments)]
fn accumulate_distance_grad(
    caches: &[ForwardCache],
    sa: usize,
    sb: usize,
    kind: DistanceKind,
    m: Option<&[f64]>,
    scale: f64,
    grad_value: &mut [Vec<f64>],
    gm: Option<&mut [f64]>,
) {
    let dv = caches[sa].value.len();
    let mut ga = vec![0.0; dv];
    let mut gb = vec![0.0; dv];
    loss_distance_grad(&caches[sa].value, &caches[sb].value, kind, m, scale, &mut ga, &mut gb, gm);
    for j in 0..dv {
        grad_value[sa][j] += ga[j];
        grad_value[sb][j] += gb[j];
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Mean unweighted pair loss of each batch before selection.
    pub step_loss: Vec<f64>,
    /// Mean objective per epoch.
    pub epoch_loss: Vec<f64>,
    /// Fraction of pairs kept by the selection, per epoch.
    pub selected_fraction: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MetricModel,
    pub denoising: Option<DenoisingState>,
    pub log: TrainLog,
}

/// Resolves labels to feature rows and registers sources in sorted order.
pub fn resolve_pairs(
    features: &KeyedVectors,
    labels: &[LabeledPair],
) -> Result<(Vec<TrainPair>, Vec<String>)> {
    let index: HashMap<&str, usize> = features
        .keys
        .iter()
        .enumerate()
        .map(|(i, k)| (k.as_str(), i))
        .collect();
    let sources: Vec<String> = labels
        .iter()
        .map(|l| l.source.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let pairs = labels
        .iter()
        .map(|l| {
            let row = |id: &str| {
                index
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::UnknownId(id.to_string()))
            };
            Ok(TrainPair {
                a: row(&l.a)?,
                b: row(&l.b)?,
                y: l.y(),
                source: sources.binary_search(&l.source).expect("registered"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((pairs, sources))
}

/// Momentum SGD over a flat list of tensors.
struct Momentum {
    velocity: Vec<Vec<f64>>,
    lr: f64,
    mu: f64,
}

impl Momentum {
    fn new(sizes: impl Iterator<Item = usize>, lr: f64, mu: f64) -> Self {
        Momentum {
            velocity: sizes.map(|n| vec![0.0; n]).collect(),
            lr,
            mu,
        }
    }

    fn step(&mut self, params: Vec<&mut Vec<f64>>, grads: Vec<&[f64]>) {
        for ((p, g), v) in params.into_iter().zip(grads).zip(&mut self.velocity) {
            for ((pi, gi), vi) in p.iter_mut().zip(g).zip(v.iter_mut()) {
                *vi = self.mu * *vi - self.lr * gi;
                *pi += *vi;
            }
        }
    }
}

/// Trains the metric model on labeled pairs over `features` (one row per
/// place). Deterministic per seed.
pub fn train(
    features: &KeyedVectors,
    labels: &[LabeledPair],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if labels.is_empty() {
        return Err(Error::Validation("no training labels".into()));
    }
    let (pairs, sources) = resolve_pairs(features, labels)?;
    let n_places = features.len();
    let mut init_rng = stream_rng(cfg.seed, 0);
    let mut model = MetricModel::new(
        cfg.shape(features.dim),
        sources,
        cfg.alpha,
        cfg.distance,
        cfg.loss,
        &mut init_rng,
    )?;
    let mut order_rng = stream_rng(cfg.seed, 1);
    let mut denoise_rng = stream_rng(cfg.seed, 2);
    let mut triplet_rng = stream_rng(cfg.seed, 3);

    let mut negatives_of: HashMap<usize, Vec<usize>> = HashMap::new();
    if cfg.loss == LossKind::Triplet {
        for p in pairs.iter().filter(|p| p.y == 0.0) {
            negatives_of.entry(p.a).or_default().push(p.b);
            negatives_of.entry(p.b).or_default().push(p.a);
        }
    }

    let sizes = model.params.tensors().iter().map(|t| t.3.len()).collect::<Vec<_>>();
    let mut opt = Momentum::new(sizes.into_iter(), cfg.learning_rate, cfg.momentum);
    let mut center_opt: Option<Momentum> = None;
    let mut denoising: Option<DenoisingState> = None;
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut step = 0usize;
    let selection = if cfg.hard_sampling {
        Selection::Hard(cfg.beta)
    } else {
        Selection::All
    };

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut order_rng);
        let (mut epoch_total, mut n_batches) = (0.0, 0usize);
        let (mut kept, mut seen) = (0usize, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let batch_pairs: Vec<TrainPair> = chunk.iter().map(|&l| pairs[l]).collect();
            let triplets = if cfg.loss == LossKind::Triplet {
                make_triplets(&batch_pairs, &negatives_of, &mut triplet_rng)
            } else {
                Vec::new()
            };
            let mut nodes = Vec::new();
            let mut targets = Vec::new();
            if let Some(state) = &mut denoising {
                if step.is_multiple_of(cfg.refresh_interval) {
                    state.refresh(&model.embed_all(&features.data)?);
                }
                nodes = (0..cfg.batch_size)
                    .map(|_| denoise_rng.random_range(0..n_places))
                    .collect();
                for &i in &nodes {
                    targets.extend_from_slice(state.target_row(i));
                }
            }
            let result = batch_objective(
                &model,
                &features.data,
                &Batch {
                    pairs: &batch_pairs,
                    triplets: &triplets,
                    selection,
                    attention: cfg.attention,
                    denoise: denoising.as_ref().map(|s| DenoiseBatch {
                        nodes: &nodes,
                        targets: &targets,
                        centers: &s.centers,
                        rho: s.rho,
                    }),
                },
            );
            let grads = result.grads.tensors();
            opt.step(
                model.params.tensors_mut(),
                grads.iter().map(|t| t.3).collect(),
            );
            if let (Some(state), Some(copt)) = (&mut denoising, &mut center_opt) {
                copt.step(vec![&mut state.centers], vec![&result.center_grads]);
            }
            log.step_loss.push(result.raw_pair_loss);
            epoch_total += result.loss;
            n_batches += 1;
            kept += result.selected.len();
            seen += batch_pairs.len();
            step += 1;
        }
        if !model.params.is_finite() {
            return Err(Error::Validation(format!(
                "training diverged in epoch {epoch}; lower the learning rate"
            )));
        }
        log.epoch_loss.push(epoch_total / n_batches as f64);
        log.selected_fraction.push(kept as f64 / seen.max(1) as f64);

        if cfg.denoising && denoising.is_none() && epoch + 1 >= cfg.warmup_epochs {
            let dv = model.shape.value_dim;
            let embeddings = model.embed_all(&features.data)?;
            let k = cfg
                .clusters
                .unwrap_or_else(|| (n_places as f64).sqrt().round() as usize)
                .clamp(1, n_places);
            let centers = init_centers(&embeddings, dv, k, cfg.seed ^ 0x5eed)?;
            let mut state = DenoisingState {
                k,
                dim: dv,
                rho: cfg.rho,
                refresh_interval: cfg.refresh_interval,
                centers,
                targets: Vec::new(),
            };
            state.refresh(&embeddings);
            // Restart the refresh schedule at the first denoising step.
            step = 0;
            center_opt = Some(Momentum::new(
                std::iter::once(state.centers.len()),
                cfg.learning_rate,
                cfg.momentum,
            ));
            denoising = Some(state);
        }
    }
    Ok(TrainOutcome {
        model,
        denoising,
        log,
    })
}

/// Two triplets per positive pair, one anchored at each endpoint. The
/// negative is a random labeled non-duplicate of the anchor when it has one,
/// else a random other endpoint of the batch.
fn make_triplets(
    pairs: &[TrainPair],
    negatives_of: &HashMap<usize, Vec<usize>>,
    rng: &mut crate::math::Rng,
) -> Vec<Triplet> {
    let endpoints: Vec<usize> = pairs
        .iter()
        .flat_map(|p| [p.a, p.b])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut out = Vec::new();
    for p in pairs.iter().filter(|p| p.y == 1.0) {
        for (anchor, positive) in [(p.a, p.b), (p.b, p.a)] {
            let negative = match negatives_of.get(&anchor) {
                Some(ns) => ns[rng.random_range(0..ns.len())],
                None => {
                    let others: Vec<usize> = endpoints
                        .iter()
                        .copied()
                        .filter(|&e| e != anchor && e != positive)
                        .collect();
                    if others.is_empty() {
                        continue;
                    }
                    others[rng.random_range(0..others.len())]
                }
            };
            out.push(Triplet {
                anchor,
                positive,
                negative,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Rng;

    const H: f64 = 1e-6;

    fn small_model(distance: DistanceKind, loss: LossKind, rng: &mut Rng) -> MetricModel {
        let mut m = MetricModel::new(
            ModelShape {
                input_dim: 4,
                hidden: vec![6, 5],
                key_dim: 2,
                value_dim: 3,
            },
            vec!["s0".into(), "s1".into(), "s2".into()],
            1.5,
            distance,
            loss,
            rng,
        )
        .unwrap();
        for q in &mut m.params.q {
            *q = rng.random_range(-1.0..1.0);
        }
        for b in m.params.trunk.iter_mut().flat_map(|l| l.bias.iter_mut()) {
            *b = rng.random_range(0.0..0.3);
        }
        if let Some(bm) = &mut m.params.bilinear {
            for v in bm.iter_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
        m
    }

    /// Per-point relative error `|a - n| / max(|a|, |n|)` over the whole
    /// gradient vector must be at most 1e-4; single entries may differ by
    /// floating-point roundoff of the loss (about `eps * loss / H`).
    fn check_all_gradients(model: &MetricModel, features: &[f64], batch: &Batch) {
        let base = batch_objective(model, features, batch);
        let fixed = Batch {
            selection: Selection::Fixed(&base.selected),
            ..*batch
        };
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        let mut names = Vec::new();
        for (t, (name, _, _, grad)) in base.grads.tensors().into_iter().enumerate() {
            for (i, &g) in grad.iter().enumerate() {
                let eval = |e: f64| {
                    let mut m = model.clone();
                    m.params.tensors_mut()[t][i] += e;
                    batch_objective(&m, features, &fixed).loss
                };
                analytic.push(g);
                numeric.push((eval(H) - eval(-H)) / (2.0 * H));
                names.push(format!("{name}[{i}]"));
            }
        }
        if let Some(dn) = batch.denoise {
            for i in 0..dn.centers.len() {
                let eval = |e: f64| {
                    let mut c = dn.centers.to_vec();
                    c[i] += e;
                    let b = Batch {
                        denoise: Some(DenoiseBatch { centers: &c, ..dn }),
                        ..fixed
                    };
                    batch_objective(model, features, &b).loss
                };
                analytic.push(base.center_grads[i]);
                numeric.push((eval(H) - eval(-H)) / (2.0 * H));
                names.push(format!("centers[{i}]"));
            }
        }
        let diff = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, n)| (a - n).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale = crate::math::norm(&analytic).max(crate::math::norm(&numeric));
        assert!(diff <= 1e-4 * scale, "relative error {}", diff / scale);
        let roundoff = 1e-7 * base.loss.abs().max(1.0);
        for ((a, n), name) in analytic.iter().zip(&numeric).zip(&names) {
            let ok = (a - n).abs() <= 1e-4 * a.abs().max(n.abs()) || (a - n).abs() <= roundoff;
            assert!(ok, "{name}: {a} vs {n}");
        }
    }

    fn random_batch(rng: &mut Rng, n_places: usize, n_pairs: usize) -> Vec<TrainPair> {
        (0..n_pairs)
            .map(|_| {
                let a = rng.random_range(0..n_places);
                let b = (a + 1 + rng.random_range(0..n_places - 1)) % n_places;
                TrainPair {
                    a,
                    b,
                    y: if rng.random_bool(0.5) { 1.0 } else { 0.0 },
                    source: rng.random_range(0..3),
                }
            })
            .collect()
    }

    fn random_features(rng: &mut Rng, n: usize) -> Vec<f64> {
        (0..n * 4).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn pairwise_gradients_match_finite_differences() {
        let mut rng = stream_rng(21, 0);
        for distance in [DistanceKind::Euclidean, DistanceKind::Cosine, DistanceKind::Bilinear] {
            for round in 0..7 {
                let model = small_model(distance, LossKind::Pairwise, &mut rng);
                let features = random_features(&mut rng, 8);
                let pairs = random_batch(&mut rng, 8, 6);
                let batch = Batch {
                    pairs: &pairs,
                    triplets: &[],
                    selection: if round % 2 == 0 { Selection::All } else { Selection::Hard(1.0) },
                    attention: false,
                    denoise: None,
                };
                check_all_gradients(&model, &features, &batch);
            }
        }
    }

    #[test]
    fn attention_gradients_match_finite_differences() {
        let mut rng = stream_rng(22, 0);
        for _ in 0..20 {
            let model = small_model(DistanceKind::Euclidean, LossKind::Pairwise, &mut rng);
            let features = random_features(&mut rng, 8);
            let pairs = random_batch(&mut rng, 8, 6);
            let batch = Batch {
                pairs: &pairs,
                triplets: &[],
                selection: Selection::Hard(0.5),
                attention: true,
                denoise: None,
            };
            check_all_gradients(&model, &features, &batch);
        }
    }

    #[test]
    fn triplet_gradients_match_finite_differences() {
        let mut rng = stream_rng(23, 0);
        for _ in 0..20 {
            let model = small_model(DistanceKind::Euclidean, LossKind::Triplet, &mut rng);
            let features = random_features(&mut rng, 8);
            let triplets: Vec<Triplet> = (0..5)
                .map(|_| Triplet {
                    anchor: rng.random_range(0..8),
                    positive: rng.random_range(0..8),
                    negative: rng.random_range(0..8),
                })
                .collect();
            let batch = Batch {
                pairs: &[],
                triplets: &triplets,
                selection: Selection::All,
                attention: false,
                denoise: None,
            };
            check_all_gradients(&model, &features, &batch);
        }
    }

    #[test]
    fn denoising_gradients_match_finite_differences() {
        let mut rng = stream_rng(24, 0);
        for _ in 0..20 {
            let model = small_model(DistanceKind::Euclidean, LossKind::Pairwise, &mut rng);
            let features = random_features(&mut rng, 8);
            let pairs = random_batch(&mut rng, 8, 4);
            let centers: Vec<f64> = (0..4 * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let nodes: Vec<usize> = (0..5).map(|_| rng.random_range(0..8)).collect();
            let mut targets = Vec::new();
            for _ in &nodes {
                let raw: Vec<f64> = (0..4).map(|_| rng.random_range(0.05..1.0)).collect();
                let z: f64 = raw.iter().sum();
                targets.extend(raw.iter().map(|v| v / z));
            }
            let batch = Batch {
                pairs: &pairs,
                triplets: &[],
                selection: Selection::All,
                attention: true,
                denoise: Some(DenoiseBatch {
                    nodes: &nodes,
                    targets: &targets,
                    centers: &centers,
                    rho: 0.8,
                }),
            };
            check_all_gradients(&model, &features, &batch);
        }
    }

    #[test]
    fn uniform_attention_matches_plain_loss() {
        let mut rng = stream_rng(25, 0);
        let mut model = small_model(DistanceKind::Euclidean, LossKind::Pairwise, &mut rng);
        model.params.q.iter_mut().for_each(|q| *q = 0.0);
        let features = random_features(&mut rng, 8);
        let pairs = random_batch(&mut rng, 8, 6);
        let plain = Batch {
            pairs: &pairs,
            triplets: &[],
            selection: Selection::All,
            attention: false,
            denoise: None,
        };
        let attended = Batch {
            attention: true,
            ..plain
        };
        let a = batch_objective(&model, &features, &plain).loss;
        let b = batch_objective(&model, &features, &attended).loss;
        assert!((a - b).abs() < 1e-12);
    }

    fn toy() -> (KeyedVectors, Vec<LabeledPair>) {
        let keys = ["a1", "a2", "b1", "b2"].map(String::from).to_vec();
        let data = vec![
            0.9, 0.1, 0.3, -0.2, //
            -0.4, 0.5, 0.8, 0.1, //
            0.7, -0.6, 0.2, 0.4, //
            -0.1, 0.2, -0.9, 0.3,
        ];
        let features = KeyedVectors::new(keys, 4, data).unwrap();
        let label = |a: &str, b: &str, y| LabeledPair::new(a, b, y, "team").unwrap();
        let labels = vec![
            label("a1", "a2", true),
            label("b1", "b2", true),
            label("a1", "b1", false),
            label("a1", "b2", false),
            label("a2", "b1", false),
            label("a2", "b2", false),
        ];
        (features, labels)
    }

    fn toy_config() -> TrainConfig {
        TrainConfig {
            hidden: vec![8],
            key_dim: 2,
            value_dim: 3,
            epochs: 200,
            batch_size: 6,
            learning_rate: 0.05,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn toy_entities_separate_after_training() {
        let (features, labels) = toy();
        for cfg in [
            toy_config(),
            TrainConfig {
                hard_sampling: true,
                attention: true,
                denoising: true,
                clusters: Some(2),
                refresh_interval: 5,
                ..toy_config()
            },
            TrainConfig {
                loss: LossKind::Triplet,
                ..toy_config()
            },
        ] {
            let out = train(&features, &labels, &cfg).unwrap();
            let u = out.model.embed_all(&features.data).unwrap();
            let d = |i: usize, j: usize| crate::math::sq_dist(&u[i * 3..i * 3 + 3], &u[j * 3..j * 3 + 3]);
            let intra = d(0, 1).max(d(2, 3));
            let inter = d(0, 2).min(d(0, 3)).min(d(1, 2)).min(d(1, 3));
            assert!(intra < inter, "{cfg:?}: intra {intra} inter {inter}");
        }
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let (features, labels) = toy();
        let cfg = TrainConfig {
            epochs: 5,
            hard_sampling: true,
            attention: true,
            denoising: true,
            clusters: Some(2),
            ..toy_config()
        };
        let a = train(&features, &labels, &cfg).unwrap();
        let b = train(&features, &labels, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.denoising, b.denoising);
        assert_eq!(a.log, b.log);
        let c = train(&features, &labels, &TrainConfig { seed: 2, ..cfg }).unwrap();
        assert_ne!(a.model, c.model);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let (features, labels) = toy();
        assert!(matches!(train(&features, &[], &toy_config()), Err(Error::Validation(_))));
        let stray = vec![LabeledPair::new("a1", "zz", true, "team").unwrap()];
        assert!(matches!(train(&features, &stray, &toy_config()), Err(Error::UnknownId(_))));
        let bad = TrainConfig {
            loss: LossKind::Triplet,
            hard_sampling: true,
            ..toy_config()
        };
        assert!(matches!(train(&features, &labels, &bad), Err(Error::Config(_))));
        let bad = TrainConfig {
            batch_size: 1,
            ..toy_config()
        };
        assert!(train(&features, &labels, &bad).is_err());
    }
}
