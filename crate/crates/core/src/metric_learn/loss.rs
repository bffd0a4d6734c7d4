use super::model::DistanceKind;
use crate::error::{Error, Result};
use crate::math::{dot, norm, sigmoid, softplus, sq_dist};

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(())
}

/// Ranking distance between two embeddings: squared L2, `1 - cos` (1 when
/// either vector is zero), or the negated bilinear score `-a^T M b`.
pub fn distance(a: &[f64], b: &[f64], kind: DistanceKind, bilinear: Option<&[f64]>) -> Result<f64> {
    check_dims(a, b)?;
    Ok(match kind {
        DistanceKind::Euclidean => sq_dist(a, b),
        DistanceKind::Cosine => cosine_distance(a, b),
        DistanceKind::Bilinear => -bilinear_score(a, b, bilinear_matrix(bilinear, a.len())?),
    })
}

fn bilinear_matrix(m: Option<&[f64]>, d: usize) -> Result<&[f64]> {
    let m = m.ok_or(Error::UndefinedMetric("bilinear distance without a matrix"))?;
    if m.len() != d * d {
        return Err(Error::DimensionMismatch {
            expected: d * d,
            actual: m.len(),
        });
    }
    Ok(m)
}

fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    1.0 - dot(a, b) / (na * nb)
}

fn bilinear_score(a: &[f64], b: &[f64], m: &[f64]) -> f64 {
    let d = a.len();
    a.iter()
        .enumerate()
        .map(|(i, ai)| ai * dot(&m[i * d..(i + 1) * d], b))
        .sum()
}

/// Distance used inside the losses and the hard-sampling criterion. Equal to
/// [`distance`] except for the bilinear kind, which maps the score `s` to
/// `softplus(-s)`: nonnegative and ranked like `-s`.
pub fn loss_distance(a: &[f64], b: &[f64], kind: DistanceKind, bilinear: Option<&[f64]>) -> f64 {
    match kind {
        DistanceKind::Bilinear => softplus(-bilinear_score(a, b, bilinear.expect("bilinear matrix"))),
        _ => distance(a, b, kind, bilinear).expect("equal dimensions"),
    }
}

/// Gradient of [`loss_distance`] scaled by `scale`, accumulated into `ga`,
/// `gb` and (bilinear kind) `gm`.
pub(crate) fn loss_distance_grad(
    a: &[f64],
    b: &[f64],
    kind: DistanceKind,
    bilinear: Option<&[f64]>,
    scale: f64,
    ga: &mut [f64],
    gb: &mut [f64],
    gm: Option<&mut [f64]>,
) {
    match kind {
        DistanceKind::Euclidean => {
            for i in 0..a.len() {
                let g = 2.0 * scale * (a[i] - b[i]);
                ga[i] += g;
                gb[i] -= g;
            }
        }
        DistanceKind::Cosine => {
            let (na, nb) = (norm(a), norm(b));
            if na == 0.0 || nb == 0.0 {
                return;
            }
            let c = dot(a, b) / (na * nb);
            for i in 0..a.len() {
                ga[i] -= scale * (b[i] / (na * nb) - c * a[i] / (na * na));
                gb[i] -= scale * (a[i] / (na * nb) - c * b[i] / (nb * nb));
            }
        }
        DistanceKind::Bilinear => {
            let m = bilinear.expect("bilinear matrix");
            let d = a.len();
            let s = bilinear_score(a, b, m);
            // d softplus(-s)/ds = -sigmoid(-s)
            let gs = -scale * sigmoid(-s);
            for i in 0..d {
                let row = &m[i * d..(i + 1) * d];
                ga[i] += gs * dot(row, b);
                for j in 0..d {
                    gb[j] += gs * a[i] * row[j];
                }
            }
            if let Some(gm) = gm {
                for i in 0..d {
                    for j in 0..d {
                        gm[i * d + j] += gs * a[i] * b[j];
                    }
                }
            }
        }
    }
}

/// Contrastive loss `y d + (1-y) max(0, alpha - d)`.
pub fn pair_loss(d: f64, y: f64, alpha: f64) -> f64 {
    y * d + (1.0 - y) * (alpha - d).max(0.0)
}

/// Derivative of [`pair_loss`] with respect to `d`.
pub fn pair_loss_grad(d: f64, y: f64, alpha: f64) -> f64 {
    y - if alpha - d > 0.0 { 1.0 - y } else { 0.0 }
}

/// Hinge `max(0, d_ap - d_an + alpha)`.
pub fn triplet_loss(d_ap: f64, d_an: f64, alpha: f64) -> f64 {
    (d_ap - d_an + alpha).max(0.0)
}

/// `y d - (1-y) d`: large for far duplicates and close non-duplicates.
pub fn signed_score(d: f64, y: f64) -> f64 {
    y * d - (1.0 - y) * d
}

/// Indices of the hard pairs of a batch of `(d, y)`: signed score strictly
/// above `beta` times the batch mean score. Falls back to the first
/// highest-scoring pair when nothing passes.
pub fn hard_select(batch: &[(f64, f64)], beta: f64) -> Vec<usize> {
    if batch.is_empty() {
        return Vec::new();
    }
    let scores: Vec<f64> = batch.iter().map(|&(d, y)| signed_score(d, y)).collect();
    let tau = beta / batch.len() as f64 * scores.iter().sum::<f64>();
    let selected: Vec<usize> = (0..scores.len()).filter(|&l| scores[l] > tau).collect();
    if !selected.is_empty() {
        return selected;
    }
    let mut best = 0;
    for (l, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = l;
        }
    }
    vec![best]
}

/// Max-subtracted softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Scores `[k_a; k_b] . q_s` for every row `q_s` of the source table.
pub fn source_scores(key_a: &[f64], key_b: &[f64], q: &[f64]) -> Vec<f64> {
    let dk = key_a.len();
    q.chunks_exact(2 * dk)
        .map(|row| dot(&row[..dk], key_a) + dot(&row[dk..], key_b))
        .collect()
}

/// Attention distribution over all registered sources for a pair whose
/// endpoints have keys `key_a`, `key_b` (canonical order). The weight of a
/// labeled pair is the entry at its own source.
pub fn attention_weights(key_a: &[f64], key_b: &[f64], q: &[f64]) -> Result<Vec<f64>> {
    check_dims(key_a, key_b)?;
    if key_a.is_empty() || q.is_empty() || !q.len().is_multiple_of(2 * key_a.len()) {
        return Err(Error::DimensionMismatch {
            expected: 2 * key_a.len(),
            actual: q.len(),
        });
    }
    Ok(softmax(&source_scores(key_a, key_b, q)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn distance_examples() {
        let e = DistanceKind::Euclidean;
        assert_eq!(distance(&[0.3, 0.4], &[0.3, 0.4], e, None).unwrap(), 0.0);
        assert_eq!(distance(&[1.0, 0.0], &[0.0, 1.0], e, None).unwrap(), 2.0);
        let c = DistanceKind::Cosine;
        assert!((distance(&[2.0, 0.0], &[0.0, 3.0], c, None).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(distance(&[0.0, 0.0], &[1.0, 0.0], c, None).unwrap(), 1.0);
        let m = [1.0, 2.0, 0.0, 1.0];
        let b = distance(&[1.0, 1.0], &[1.0, 0.0], DistanceKind::Bilinear, Some(&m)).unwrap();
        assert_eq!(b, -1.0);
        assert!(distance(&[1.0], &[1.0, 2.0], e, None).is_err());
        assert!(distance(&[1.0], &[1.0], DistanceKind::Bilinear, None).is_err());
    }

    #[test]
    fn pair_loss_examples() {
        assert_eq!(pair_loss(0.25, 1.0, 1.0), 0.25);
        assert_eq!(pair_loss(0.25, 0.0, 1.0), 0.75);
        assert_eq!(pair_loss(2.0, 0.0, 1.0), 0.0);
    }

    #[test]
    fn triplet_loss_examples() {
        assert_eq!(triplet_loss(0.2, 0.5, 0.1), 0.0);
        assert!((triplet_loss(0.2, 0.5, 0.4) - 0.1).abs() < 1e-15);
        assert_eq!(triplet_loss(0.7, 0.7, 0.3), 0.3);
    }

    #[test]
    fn hard_select_examples() {
        // scores {+2, -1}, tau = 0.5
        assert_eq!(hard_select(&[(2.0, 1.0), (1.0, 0.0)], 1.0), vec![0]);
        // all scores equal: fallback to one pair
        assert_eq!(hard_select(&[(1.0, 1.0), (1.0, 1.0), (1.0, 1.0)], 1.0), vec![0]);
        // beta = 0 keeps exactly the positive scores
        let batch = [(0.5, 1.0), (0.0, 1.0), (0.3, 0.0), (0.9, 1.0)];
        assert_eq!(hard_select(&batch, 0.0), vec![0, 3]);
    }

    #[test]
    fn attention_examples() {
        let w = attention_weights(&[1.0], &[2.0], &[0.3, -0.1]).unwrap();
        assert_eq!(w, vec![1.0]);
        let w = attention_weights(&[1.0], &[1.0], &[0.5, 0.5, 1.0, 0.0]).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-15 && (w[1] - 0.5).abs() < 1e-15);
        // scores (ln 3, 0)
        let w = attention_weights(&[1.0], &[0.0], &[3f64.ln(), 0.0, 0.0, 0.0]).unwrap();
        assert!((w[0] - 0.75).abs() < 1e-12 && (w[1] - 0.25).abs() < 1e-12);
        assert!(attention_weights(&[1.0], &[0.0], &[1.0, 0.0, 2.0]).is_err());
    }

    #[test]
    fn loss_distance_gradients_match_finite_differences() {
        let mut rng = crate::math::stream_rng(4, 0);
        use rand::Rng as _;
        let h = 1e-6;
        for kind in [DistanceKind::Euclidean, DistanceKind::Cosine, DistanceKind::Bilinear] {
            for _ in 0..20 {
                let a: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
                let b: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
                let m: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
                let mm = (kind == DistanceKind::Bilinear).then_some(&m[..]);
                let (mut ga, mut gb, mut gm) = (vec![0.0; 3], vec![0.0; 3], vec![0.0; 9]);
                loss_distance_grad(&a, &b, kind, mm, 1.0, &mut ga, &mut gb, Some(&mut gm));
                let f = |a: &[f64], b: &[f64], m: &[f64]| {
                    loss_distance(a, b, kind, (kind == DistanceKind::Bilinear).then_some(m))
                };
                let fd = |which: usize, i: usize| {
                    let (mut a1, mut b1, mut m1) = (a.clone(), b.clone(), m.clone());
                    let (mut a2, mut b2, mut m2) = (a.clone(), b.clone(), m.clone());
                    match which {
                        0 => (a1[i] += h, a2[i] -= h),
                        1 => (b1[i] += h, b2[i] -= h),
                        _ => (m1[i] += h, m2[i] -= h),
                    };
                    (f(&a1, &b1, &m1) - f(&a2, &b2, &m2)) / (2.0 * h)
                };
                let close = |x: f64, y: f64| {
                    (x - y).abs() / x.abs().max(y.abs()).max(1e-6) <= 1e-4
                };
                for i in 0..3 {
                    assert!(close(ga[i], fd(0, i)), "{kind} a{i}");
                    assert!(close(gb[i], fd(1, i)), "{kind} b{i}");
                }
                if kind == DistanceKind::Bilinear {
                    for i in 0..9 {
                        assert!(close(gm[i], fd(2, i)), "m{i}");
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn pair_loss_is_nonnegative_with_exact_zero_set(d in 0.0f64..3.0, positive in any::<bool>(), alpha in 0.1f64..2.0) {
            let y = if positive { 1.0 } else { 0.0 };
            let l = pair_loss(d, y, alpha);
            prop_assert!(l >= 0.0);
            let zero = (positive && d == 0.0) || (!positive && d >= alpha);
            prop_assert_eq!(l == 0.0, zero);
        }

        #[test]
        fn triplet_loss_is_nonnegative(d_ap in 0.0f64..3.0, d_an in 0.0f64..3.0, alpha in 0.1f64..2.0) {
            let l = triplet_loss(d_ap, d_an, alpha);
            prop_assert!(l >= 0.0);
            prop_assert_eq!(l == 0.0, d_an >= d_ap + alpha);
        }

        #[test]
        fn hard_select_is_monotone_in_score(
            batch in proptest::collection::vec((0.0f64..4.0, any::<bool>()), 1..40),
            beta in 0.0f64..3.0,
        ) {
            let batch: Vec<(f64, f64)> = batch.into_iter().map(|(d, p)| (d, if p { 1.0 } else { 0.0 })).collect();
            let sel = hard_select(&batch, beta);
            prop_assert!(!sel.is_empty());
            let score = |l: usize| signed_score(batch[l].0, batch[l].1);
            for &l in &sel {
                for m in 0..batch.len() {
                    if score(m) > score(l) {
                        prop_assert!(sel.contains(&m));
                    }
                }
            }
        }

        #[test]
        fn attention_is_a_distribution_invariant_to_shift(
            scores in proptest::collection::vec(-20.0f64..20.0, 1..6),
            shift in -50.0f64..50.0,
            lambda in 0.01f64..10.0,
        ) {
            let w = softmax(&scores);
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(w.iter().all(|&v| v >= 0.0));
            let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
            for (a, b) in w.iter().zip(softmax(&shifted)) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            let argmax = |v: &[f64]| (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b });
            let scaled: Vec<f64> = scores.iter().map(|s| s * lambda).collect();
            prop_assert_eq!(argmax(&w), argmax(&softmax(&scaled)));
        }

        #[test]
        fn scaling_q_preserves_argmax_source(
            ka in proptest::collection::vec(-1.0f64..1.0, 2),
            kb in proptest::collection::vec(-1.0f64..1.0, 2),
            q in proptest::collection::vec(-2.0f64..2.0, 12),
            lambda in 0.01f64..10.0,
        ) {
            let w = attention_weights(&ka, &kb, &q).unwrap();
            let qs: Vec<f64> = q.iter().map(|v| v * lambda).collect();
            let ws = attention_weights(&ka, &kb, &qs).unwrap();
            let argmax = |v: &[f64]| (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b });
            prop_assert_eq!(argmax(&w), argmax(&ws));
        }
    }
}
