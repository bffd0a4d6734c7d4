//! Skip-gram with negative sampling over short texts.

use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng as _;

use super::subword::SubwordSpec;
use super::table::EmbeddingTable;
use super::vocab::Vocabulary;
use super::sample_pairs;
use crate::error::{Error, Result};
use crate::math::{dot, log_sigmoid, sigmoid, stream_rng};

#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig {
    /// Negatives drawn per positive pair.
    pub negatives: usize,
    /// Initial learning rate, decayed linearly to 1e-4 of itself.
    pub learning_rate: f64,
    pub epochs: usize,
    /// Exponent applied to unigram counts for the noise distribution.
    pub noise_exponent: f64,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            negatives: 5,
            learning_rate: 0.05,
            epochs: 10,
            noise_exponent: 0.75,
            seed: 1,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.negatives == 0 {
            return Err(Error::Config("at least one negative per positive is required".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkipgramConfig {
    pub dim: usize,
    /// `None` pairs every two positions of a text; `Some(w)` limits the
    /// distance between center and context to `w`.
    pub window: Option<usize>,
    pub sgd: SgdConfig,
    pub subword: Option<SubwordSpec>,
}

impl Default for SkipgramConfig {
    fn default() -> Self {
        SkipgramConfig {
            dim: 50,
            window: None,
            sgd: SgdConfig::default(),
            subword: None,
        }
    }
}

/// Mean negative-sampling loss per positive pair, one entry per epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub epoch_loss: Vec<f64>,
    pub pairs_per_epoch: usize,
}

/// Negative-sampling loss for one center vector `u` against `targets`
/// (row-major, `labels.len() x dim`), where `labels[j]` marks the true
/// context:
///
/// `-sum_j log sigma(s_j * u . t_j)`, `s_j = +1` for positives, `-1` otherwise.
///
/// Gradients of the loss are written to `grad_u` and `grad_targets`.
pub fn ns_loss_grad(
    u: &[f64],
    targets: &[f64],
    labels: &[bool],
    grad_u: &mut [f64],
    grad_targets: &mut [f64],
) -> f64 {
    let d = u.len();
    grad_u.iter_mut().for_each(|g| *g = 0.0);
    let mut loss = 0.0;
    for (j, &positive) in labels.iter().enumerate() {
        let t = &targets[j * d..(j + 1) * d];
        let score = dot(u, t);
        let sign = if positive { 1.0 } else { -1.0 };
        loss -= log_sigmoid(sign * score);
        // d/ds of -log sigma(sign * s)
        let g = -sign * sigmoid(-sign * score);
        let gt = &mut grad_targets[j * d..(j + 1) * d];
        for k in 0..d {
            grad_u[k] += g * t[k];
            gt[k] = g * u[k];
        }
    }
    loss
}

/// Trains skip-gram embeddings on `corpus` (one token list per text).
pub fn train_skipgram(
    corpus: &[Vec<String>],
    vocab: Vocabulary,
    cfg: &SkipgramConfig,
) -> Result<(EmbeddingTable, TrainingLog)> {
    cfg.sgd.validate()?;
    let d = cfg.dim;
    if d == 0 {
        return Err(Error::Config("embedding dimension must be at least 1".into()));
    }
    let v = vocab.len();
    let mut rng = stream_rng(cfg.sgd.seed, 0);
    let bound = 0.5 / d as f64;
    let words: Vec<f64> = (0..v * d).map(|_| rng.random_range(-bound..bound)).collect();
    let context = vec![0.0; v * d];
    let subword = cfg.subword.map(|spec| (spec, vec![0.0; spec.buckets * d]));
    let mut table = EmbeddingTable::new(vocab, d, words, Some(context), subword)?;

    let sentences: Vec<Vec<usize>> = corpus
        .iter()
        .map(|s| table.vocab.lookup(s))
        .filter(|s| s.len() >= 2)
        .collect();
    let pairs_per_epoch: usize = sentences
        .iter()
        .map(|s| sample_pairs(s, cfg.window).len())
        .sum();
    let mut log = TrainingLog {
        epoch_loss: Vec::with_capacity(cfg.sgd.epochs),
        pairs_per_epoch,
    };
    let Some(noise) = table.vocab.noise_distribution(cfg.sgd.noise_exponent) else {
        // Frequencies unknown (or all zero): nothing to sample negatives from.
        return Err(Error::Config(
            "vocabulary has no frequencies for the noise distribution".into(),
        ));
    };
    if pairs_per_epoch == 0 {
        return Ok((table, log));
    }

    let total = (pairs_per_epoch * cfg.sgd.epochs) as f64;
    let lr0 = cfg.sgd.learning_rate;
    let k = cfg.sgd.negatives;
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    let mut u = vec![0.0; d];
    let mut grad_u = vec![0.0; d];
    let mut targets = Vec::with_capacity((k + 1) * d);
    let mut grad_targets = vec![0.0; (k + 1) * d];
    let mut target_ids = Vec::with_capacity(k + 1);
    let mut labels = Vec::with_capacity(k + 1);
    let mut processed = 0usize;

    for _ in 0..cfg.sgd.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for &si in &order {
            for (w, c) in sample_pairs(&sentences[si], cfg.window) {
                let lr = lr0 * (1.0 - processed as f64 / total).max(1e-4);
                processed += 1;

                match &table.subword {
                    Some(sub) => table.compose(w, sub, &mut u),
                    None => u.copy_from_slice(table.word_vector(w)),
                }
                let ctx = table.context.as_ref().expect("training table has context");
                targets.clear();
                target_ids.clear();
                labels.clear();
                target_ids.push(c);
                labels.push(true);
                for _ in 0..k {
                    let n = noise.sample(&mut rng);
                    if n != c {
                        target_ids.push(n);
                        labels.push(false);
                    }
                }
                for &t in &target_ids {
                    targets.extend_from_slice(&ctx[t * d..(t + 1) * d]);
                }
                let m = labels.len();
                epoch_loss += ns_loss_grad(&u, &targets, &labels, &mut grad_u, &mut grad_targets[..m * d]);

                let ctx = table.context.as_mut().expect("training table has context");
                for (j, &t) in target_ids.iter().enumerate() {
                    let row = &mut ctx[t * d..(t + 1) * d];
                    for (x, g) in row.iter_mut().zip(&grad_targets[j * d..(j + 1) * d]) {
                        *x -= lr * g;
                    }
                }
                apply_input_gradient(&mut table, w, &grad_u, lr);
            }
        }
        log.epoch_loss.push(epoch_loss / pairs_per_epoch as f64);
    }
    Ok((table, log))
}

/// Spreads the gradient of the composed input vector over its parts: the
/// word vector and, with subwords, each n-gram bucket (each gets `1/n`).
fn apply_input_gradient(table: &mut EmbeddingTable, w: usize, grad_u: &[f64], lr: f64) {
    let d = table.dim;
    let n_parts = table
        .subword
        .as_ref()
        .map_or(1, |s| 1 + s.word_ngrams[w].len());
    let step = lr / n_parts as f64;
    for (x, g) in table.words[w * d..(w + 1) * d].iter_mut().zip(grad_u) {
        *x -= step * g;
    }
    if let Some(sub) = &mut table.subword {
        for &b in &sub.word_ngrams[w] {
            for (x, g) in sub.vectors[b * d..(b + 1) * d].iter_mut().zip(grad_u) {
                *x -= step * g;
            }
        }
    }
}
