use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::math::{sq_dist, stream_rng};

/// Floor applied to assignment probabilities inside the logarithm.
pub const KL_EPSILON: f64 = 1e-12;

/// Lloyd iteration cap for [`init_centers`].
pub const LLOYD_MAX_ITERS: usize = 50;

/// Student-t (one degree of freedom) soft assignment of `u` to each row of
/// `centers`.
pub fn soft_assign(u: &[f64], centers: &[f64]) -> Vec<f64> {
    let dim = u.len();
    let kernel: Vec<f64> = centers
        .chunks_exact(dim)
        .map(|c| 1.0 / (1.0 + sq_dist(u, c)))
        .collect();
    let z: f64 = kernel.iter().sum();
    kernel.into_iter().map(|t| t / z).collect()
}

/// Soft assignments of every row of `points` (row-major, `n x K` result).
pub fn soft_assign_all(points: &[f64], dim: usize, centers: &[f64]) -> Vec<f64> {
    points
        .chunks_exact(dim)
        .flat_map(|u| soft_assign(u, centers))
        .collect()
}

/// Sharpened target `c_ik` proportional to `d_ik^2 / g_k` with cluster
/// masses `g_k = sum_i d_ik`. `d` is row-major with `k` columns.
pub fn target_dist(d: &[f64], k: usize) -> Vec<f64> {
    let mut mass = vec![0.0; k];
    for row in d.chunks_exact(k) {
        for (g, v) in mass.iter_mut().zip(row) {
            *g += v;
        }
    }
    let mut c = Vec::with_capacity(d.len());
    for row in d.chunks_exact(k) {
        let raw: Vec<f64> = row
            .iter()
            .zip(&mass)
            .map(|(v, g)| if *g > 0.0 { v * v / g } else { 0.0 })
            .collect();
        let z: f64 = raw.iter().sum();
        c.extend(raw.into_iter().map(|v| v / z));
    }
    c
}

/// `rho * sum c log(c / d)` with `0 log 0 = 0` and `d` floored at
/// [`KL_EPSILON`].
pub fn denoise_loss(d: &[f64], c: &[f64], rho: f64) -> f64 {
    rho * d
        .iter()
        .zip(c)
        .filter(|(_, &c)| c > 0.0)
        .map(|(&d, &c)| c * (c / d.max(KL_EPSILON)).ln())
        .sum::<f64>()
        .max(0.0)
}

/// Loss of one row and its gradients: `rho KL(c || d(u))` with respect to
/// `u` (accumulated into `grad_u`) and every center (into `grad_centers`),
/// each scaled by `scale`.
pub(crate) fn denoise_row_grad(
    u: &[f64],
    centers: &[f64],
    c: &[f64],
    rho: f64,
    scale: f64,
    grad_u: &mut [f64],
    grad_centers: &mut [f64],
) -> f64 {
    let dim = u.len();
    let d = soft_assign(u, centers);
    let loss = denoise_loss(&d, c, rho);
    for (k, mu) in centers.chunks_exact(dim).enumerate() {
        let t = 1.0 / (1.0 + sq_dist(u, mu));
        let coef = 2.0 * rho * scale * t * (c[k] - d[k]);
        let gc = &mut grad_centers[k * dim..(k + 1) * dim];
        for i in 0..dim {
            let g = coef * (u[i] - mu[i]);
            grad_u[i] += g;
            gc[i] -= g;
        }
    }
    loss
}

/// k-means++ seeding followed by Lloyd iterations until the assignment stops
/// changing or [`LLOYD_MAX_ITERS`] is reached. Returns `k x dim` centers.
pub fn init_centers(points: &[f64], dim: usize, k: usize, seed: u64) -> Result<Vec<f64>> {
    let n = if dim == 0 { 0 } else { points.len() / dim };
    if k == 0 || k > n {
        return Err(Error::Config(format!(
            "cannot place {k} centers on {n} points"
        )));
    }
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut rng = stream_rng(seed, 0);
    let mut chosen = vec![rng.random_range(0..n)];
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(row(i), row(chosen[0]))).collect();
    while chosen.len() < k {
        let next = match WeightedIndex::new(&nearest) {
            Ok(w) => w.sample(&mut rng),
            Err(_) => {
                // All remaining points coincide with a center.
                let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
                free[rng.random_range(0..free.len())]
            }
        };
        chosen.push(next);
        for (i, best) in nearest.iter_mut().enumerate() {
            *best = best.min(sq_dist(row(i), row(next)));
        }
    }
    let mut centers: Vec<f64> = chosen.iter().flat_map(|&i| row(i).to_vec()).collect();

    let mut assignment = vec![usize::MAX; n];
    for _ in 0..LLOYD_MAX_ITERS {
        let mut changed = false;
        for (i, a) in assignment.iter_mut().enumerate() {
            let best = nearest_center(row(i), &centers, dim);
            if *a != best {
                *a = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &a) in assignment.iter().enumerate() {
            counts[a] += 1;
            for (s, x) in sums[a * dim..(a + 1) * dim].iter_mut().zip(row(i)) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..dim {
                    centers[c * dim + j] = sums[c * dim + j] / counts[c] as f64;
                }
            }
        }
    }
    Ok(centers)
}

fn nearest_center(x: &[f64], centers: &[f64], dim: usize) -> usize {
    let mut best = (0, f64::INFINITY);
    for (c, mu) in centers.chunks_exact(dim).enumerate() {
        let d = sq_dist(x, mu);
        if d < best.1 {
            best = (c, d);
        }
    }
    best.0
}

/// Cluster state carried through training when denoising is enabled.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoisingState {
    pub k: usize,
    pub dim: usize,
    pub rho: f64,
    pub refresh_interval: usize,
    /// Row-major `k x dim`.
    pub centers: Vec<f64>,
    /// Target distribution for every place, row-major `n x k`, as of the last
    /// refresh.
    pub targets: Vec<f64>,
}

impl DenoisingState {
    /// Recomputes the targets from the current embeddings of all places.
    pub fn refresh(&mut self, embeddings: &[f64]) {
        let d = soft_assign_all(embeddings, self.dim, &self.centers);
        self.targets = target_dist(&d, self.k);
    }

    pub fn target_row(&self, i: usize) -> &[f64] {
        &self.targets[i * self.k..(i + 1) * self.k]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::stream_rng;
    use proptest::prelude::*;

    #[test]
    fn soft_assign_examples() {
        let d = soft_assign(&[0.0, 0.0], &[1.0, 0.0, 0.0, 1.0, -1.0, 0.0]);
        assert!(d.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        let d = soft_assign(&[0.0], &[0.0, 1.0]);
        assert!((d[0] - 2.0 / 3.0).abs() < 1e-15 && (d[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(soft_assign(&[4.0, 2.0], &[0.0, 0.0]), vec![1.0]);
    }

    #[test]
    fn target_dist_examples() {
        let c = target_dist(&[0.5, 0.5, 0.5, 0.5], 2);
        assert!(c.iter().all(|v| (v - 0.5).abs() < 1e-15));
        let c = target_dist(&[2.0 / 3.0, 1.0 / 3.0], 2);
        assert!((c[0] - 2.0 / 3.0).abs() < 1e-15 && (c[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(target_dist(&[1.0, 1.0, 1.0], 1), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn denoise_loss_examples() {
        let d = [0.2, 0.8];
        assert_eq!(denoise_loss(&d, &d, 1.0), 0.0);
        assert_eq!(denoise_loss(&d, &[1.0, 0.0], 0.0), 0.0);
        assert!((denoise_loss(&[0.5, 0.5], &[1.0, 0.0], 1.0) - 2f64.ln()).abs() < 1e-15);
        assert!(denoise_loss(&[0.0, 1.0], &[1.0, 0.0], 1.0).is_finite());
    }

    #[test]
    fn denoise_gradient_matches_finite_differences() {
        use rand::Rng as _;
        let mut rng = stream_rng(12, 0);
        let (dim, k, h, rho) = (3, 4, 1e-6, 0.7);
        for _ in 0..20 {
            let u: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mu: Vec<f64> = (0..k * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
            let z: f64 = raw.iter().sum();
            let c: Vec<f64> = raw.iter().map(|v| v / z).collect();
            let (mut gu, mut gm) = (vec![0.0; dim], vec![0.0; k * dim]);
            denoise_row_grad(&u, &mu, &c, rho, 1.0, &mut gu, &mut gm);
            let f = |u: &[f64], mu: &[f64]| denoise_loss(&soft_assign(u, mu), &c, rho);
            let close = |x: f64, y: f64| (x - y).abs() / x.abs().max(y.abs()).max(1e-6) <= 1e-4;
            for i in 0..dim {
                let (mut up, mut dn) = (u.clone(), u.clone());
                up[i] += h;
                dn[i] -= h;
                assert!(close(gu[i], (f(&up, &mu) - f(&dn, &mu)) / (2.0 * h)));
            }
            for i in 0..k * dim {
                let (mut up, mut dn) = (mu.clone(), mu.clone());
                up[i] += h;
                dn[i] -= h;
                assert!(close(gm[i], (f(&u, &up) - f(&u, &dn)) / (2.0 * h)));
            }
        }
    }

    #[test]
    fn one_center_is_the_centroid() {
        let pts = [0.0, 0.0, 2.0, 0.0, 1.0, 3.0];
        let c = init_centers(&pts, 2, 1, 5).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-15 && (c[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn k_equal_to_distinct_points_puts_a_center_on_each() {
        let pts = [0.0, 0.0, 5.0, 0.0, 0.0, 7.0, 3.0, 3.0];
        let c = init_centers(&pts, 2, 4, 9).unwrap();
        let mut got: Vec<(i64, i64)> = c.chunks(2).map(|p| (p[0] as i64, p[1] as i64)).collect();
        got.sort();
        assert_eq!(got, vec![(0, 0), (0, 7), (3, 3), (5, 0)]);
    }

    #[test]
    fn two_blobs_get_one_center_each() {
        use rand::Rng as _;
        let mut rng = stream_rng(2, 0);
        let mut pts = Vec::new();
        for i in 0..40 {
            let base = if i % 2 == 0 { 0.0 } else { 10.0 };
            pts.push(base + rng.random_range(0.0..1.0));
            pts.push(base + rng.random_range(0.0..1.0));
        }
        let c = init_centers(&pts, 2, 2, 1).unwrap();
        let inside = |p: &[f64], base: f64| p.iter().all(|v| (base..base + 1.0).contains(v));
        let (a, b) = (&c[..2], &c[2..]);
        assert!((inside(a, 0.0) && inside(b, 10.0)) || (inside(a, 10.0) && inside(b, 0.0)));
    }

    #[test]
    fn too_many_centers_is_an_error() {
        assert!(init_centers(&[0.0, 1.0], 1, 3, 0).is_err());
        assert!(init_centers(&[0.0, 1.0], 1, 0, 0).is_err());
    }

    #[test]
    fn init_centers_is_deterministic() {
        let pts: Vec<f64> = (0..60).map(|i| ((i * 37) % 11) as f64).collect();
        assert_eq!(init_centers(&pts, 3, 4, 8).unwrap(), init_centers(&pts, 3, 4, 8).unwrap());
    }

    proptest! {
        #[test]
        fn assignments_and_targets_are_row_stochastic(
            pts in proptest::collection::vec(-5.0f64..5.0, 2..40),
            centers in proptest::collection::vec(-5.0f64..5.0, 2..12),
        ) {
            let (pts, centers) = (&pts[..pts.len() / 2 * 2], &centers[..centers.len() / 2 * 2]);
            let k = centers.len() / 2;
            let d = soft_assign_all(pts, 2, centers);
            let c = target_dist(&d, k);
            for row in d.chunks(k).chain(c.chunks(k)) {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(row.iter().all(|&v| v >= 0.0));
            }
            prop_assert!(denoise_loss(&d, &c, 1.0) >= 0.0);
        }
    }
}
