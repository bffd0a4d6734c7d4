//! Embedding quality: pairwise ACC and PRE@K/REC@K over exact k-NN.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::sq_dist;
use crate::place_model::EvalSets;
use crate::text_embed::KeyedVectors;

/// Curves run from K=1 to this value.
pub const K_MAX: usize = 100;

/// Exact nearest-neighbor index over an id-keyed embedding matrix.
#[derive(Debug, Clone)]
pub struct KnnIndex {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f64>,
    lookup: HashMap<String, usize>,
}

impl KnnIndex {
    pub fn new(ids: Vec<String>, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != ids.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: ids.len() * dim,
                actual: data.len(),
            });
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite embedding value {v}")));
        }
        let mut lookup = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if lookup.insert(id.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate id `{id}` in index")));
            }
        }
        Ok(KnnIndex {
            ids,
            dim,
            data,
            lookup,
        })
    }

    pub fn from_vectors(v: &KeyedVectors) -> Result<Self> {
        Self::new(v.keys.clone(), v.dim, v.data.clone())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn position(&self, id: &str) -> Result<usize> {
        self.lookup
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownId(id.to_string()))
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Squared Euclidean distance between two indexed ids.
    pub fn distance(&self, a: &str, b: &str) -> Result<f64> {
        Ok(sq_dist(
            self.vector(self.position(a)?),
            self.vector(self.position(b)?),
        ))
    }

    /// Up to `k` nearest other points to row `q`, ordered by distance then id.
    fn nearest(&self, q: usize, k: usize) -> Vec<(f64, usize)> {
        let x = self.vector(q);
        let mut all: Vec<(f64, usize)> = (0..self.len())
            .filter(|&i| i != q)
            .map(|i| (sq_dist(x, self.vector(i)), i))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(Ordering::Equal)
                .then_with(|| self.ids[a.1].cmp(&self.ids[b.1]))
        };
        let k = k.min(all.len());
        if k < all.len() && k > 0 {
            all.select_nth_unstable_by(k - 1, cmp);
            all.truncate(k);
        }
        all.sort_by(cmp);
        all.truncate(k);
        all
    }
}

/// The `k` nearest ids to `query` by squared Euclidean distance, excluding
/// the query itself; ties go to the smaller id.
pub fn knn_exact(index: &KnnIndex, query: &str, k: usize) -> Result<Vec<String>> {
    let q = index.position(query)?;
    if k >= index.len() {
        return Err(Error::Validation(format!(
            "k = {k} needs more than {} indexed points",
            index.len()
        )));
    }
    Ok(index
        .nearest(q, k)
        .into_iter()
        .map(|(_, i)| index.ids[i].clone())
        .collect())
}

/// Mean over probes in omega of the fraction of (duplicate, non-duplicate)
/// pairs with the duplicate strictly closer.
pub fn acc(index: &KnnIndex, sets: &EvalSets) -> Result<f64> {
    if sets.omega.is_empty() {
        return Err(Error::UndefinedMetric("ACC needs at least one probe"));
    }
    let empty = BTreeSet::new();
    let mut total = 0.0;
    for a in &sets.omega {
        let pa = index.vector(index.position(a)?);
        let dist = |ids: &BTreeSet<String>| -> Result<Vec<f64>> {
            ids.iter()
                .map(|p| Ok(sq_dist(pa, index.vector(index.position(p)?))))
                .collect()
        };
        let dp = dist(sets.phi.get(a).unwrap_or(&empty))?;
        let mut dn = dist(sets.psi.get(a).unwrap_or(&empty))?;
        if dp.is_empty() || dn.is_empty() {
            return Err(Error::Validation(format!(
                "probe `{a}` lacks duplicates or non-duplicates"
            )));
        }
        dn.sort_by(|x, y| x.partial_cmp(y).unwrap_or(Ordering::Equal));
        // For each duplicate count the non-duplicates strictly farther away.
        let wins: usize = dp
            .iter()
            .map(|&d| dn.len() - dn.partition_point(|&n| n <= d))
            .sum();
        total += wins as f64 / (dp.len() * dn.len()) as f64;
    }
    Ok(total / sets.omega.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurves {
    /// Entry `K-1` holds PRE@K.
    pub pre_at_k: Vec<f64>,
    pub rec_at_k: Vec<f64>,
}

/// Macro-averaged PRE@K and REC@K for K = 1..=`k_max` over probes in theta.
/// The retrieval pool is every indexed point except the probe; when it has
/// fewer than K points all of them are retrieved.
pub fn precision_recall_at_k(index: &KnnIndex, sets: &EvalSets, k_max: usize) -> Result<PrCurves> {
    if sets.theta.is_empty() {
        return Err(Error::UndefinedMetric("PRE@K/REC@K need at least one probe"));
    }
    let mut pre = vec![0.0; k_max];
    let mut rec = vec![0.0; k_max];
    for a in &sets.theta {
        let q = index.position(a)?;
        let dups = sets
            .phi
            .get(a)
            .filter(|d| !d.is_empty())
            .ok_or_else(|| Error::Validation(format!("probe `{a}` has no duplicates")))?;
        for d in dups {
            index.position(d)?;
        }
        let found = index.nearest(q, k_max);
        let mut hits = 0usize;
        for k in 1..=k_max {
            if let Some(&(_, i)) = found.get(k - 1) {
                if dups.contains(&index.ids[i]) {
                    hits += 1;
                }
            }
            pre[k - 1] += hits as f64 / k as f64;
            rec[k - 1] += hits as f64 / dups.len() as f64;
        }
    }
    let n = sets.theta.len() as f64;
    pre.iter_mut().chain(rec.iter_mut()).for_each(|v| *v /= n);
    Ok(PrCurves {
        pre_at_k: pre,
        rec_at_k: rec,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub acc: f64,
    pub pre_at_k: Vec<f64>,
    pub rec_at_k: Vec<f64>,
    pub avg_pre: f64,
    pub avg_rec: f64,
    pub n_omega: usize,
    pub n_theta: usize,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `K\tPRE@K\tREC@K` rows under a header line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("k\tpre_at_k\trec_at_k\n");
        for (k, (p, r)) in self.pre_at_k.iter().zip(&self.rec_at_k).enumerate() {
            out.push_str(&format!("{}\t{p}\t{r}\n", k + 1));
        }
        out
    }

    pub fn write(&self, json_path: impl AsRef<Path>, tsv_path: impl AsRef<Path>) -> Result<()> {
        let (j, t) = (json_path.as_ref(), tsv_path.as_ref());
        fs::write(j, self.to_json() + "\n").map_err(|e| Error::io(j, e))?;
        fs::write(t, self.to_tsv()).map_err(|e| Error::io(t, e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let p = path.as_ref();
        let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", p.display())))
    }
}

/// ACC plus PRE/REC curves up to [`K_MAX`] and their means.
pub fn evaluate(index: &KnnIndex, sets: &EvalSets) -> Result<EvalReport> {
    let acc = acc(index, sets)?;
    let curves = precision_recall_at_k(index, sets, K_MAX)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(EvalReport {
        acc,
        avg_pre: mean(&curves.pre_at_k),
        avg_rec: mean(&curves.rec_at_k),
        pre_at_k: curves.pre_at_k,
        rec_at_k: curves.rec_at_k,
        n_omega: sets.omega.len(),
        n_theta: sets.theta.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::place_model::{build_eval_sets, LabeledPair};
    use proptest::prelude::*;

    fn index(points: &[(&str, &[f64])]) -> KnnIndex {
        let dim = points[0].1.len();
        KnnIndex::new(
            points.iter().map(|(id, _)| id.to_string()).collect(),
            dim,
            points.iter().flat_map(|(_, v)| v.to_vec()).collect(),
        )
        .unwrap()
    }

    fn sets(pairs: &[(&str, &str, bool)]) -> EvalSets {
        let labels: Vec<LabeledPair> = pairs
            .iter()
            .map(|&(a, b, y)| LabeledPair::new(a, b, y, "golden").unwrap())
            .collect();
        build_eval_sets(&labels)
    }

    #[test]
    fn knn_examples() {
        let idx = index(&[("a", &[0.0]), ("b", &[1.0]), ("c", &[2.5])]);
        assert_eq!(knn_exact(&idx, "b", 2).unwrap(), vec!["a", "c"]);
        let idx = index(&[("q", &[0.0]), ("z", &[1.0]), ("m", &[-1.0])]);
        assert_eq!(knn_exact(&idx, "q", 2).unwrap(), vec!["m", "z"]);
        assert!(matches!(knn_exact(&idx, "x", 1), Err(Error::UnknownId(_))));
        assert!(knn_exact(&idx, "q", 3).is_err());
    }

    #[test]
    fn index_rejects_bad_input() {
        assert!(KnnIndex::new(vec!["a".into(), "a".into()], 1, vec![0.0, 1.0]).is_err());
        assert!(KnnIndex::new(vec!["a".into()], 1, vec![f64::NAN]).is_err());
        assert!(KnnIndex::new(vec!["a".into()], 2, vec![0.0]).is_err());
    }

    #[test]
    fn acc_examples() {
        let s = sets(&[("a", "p", true), ("a", "n", false)]);
        let idx = index(&[("a", &[0.0]), ("p", &[0.1f64.sqrt()]), ("n", &[0.2f64.sqrt()])]);
        assert_eq!(acc(&idx, &s).unwrap(), 1.0);
        let idx = index(&[("a", &[0.0]), ("p", &[0.5]), ("n", &[-0.5])]);
        // Ties count as failures; the endpoints p and n are probes too.
        let s1 = sets(&[("a", "p", true), ("a", "n", false)]);
        let probes_a_only = EvalSets {
            omega: ["a".to_string()].into(),
            ..s1
        };
        assert_eq!(acc(&idx, &probes_a_only).unwrap(), 0.0);
        assert!(matches!(acc(&idx, &EvalSets::default()), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn pre_rec_example() {
        let idx = index(&[
            ("a", &[0.0]),
            ("d1", &[0.1]),
            ("x1", &[0.2]),
            ("d2", &[0.3]),
            ("x2", &[0.4]),
            ("x3", &[0.5]),
            ("x4", &[9.0]),
        ]);
        let s = EvalSets {
            theta: ["a".to_string()].into(),
            phi: [("a".to_string(), ["d1".to_string(), "d2".to_string()].into())].into(),
            ..EvalSets::default()
        };
        let c = precision_recall_at_k(&idx, &s, 6).unwrap();
        assert!((c.pre_at_k[4] - 0.4).abs() < 1e-15);
        assert_eq!(c.rec_at_k[4], 1.0);
        assert_eq!(c.rec_at_k[5], 1.0);
        assert_eq!(c.pre_at_k[0], 1.0);
        assert_eq!(c.rec_at_k[0], 0.5);
        assert!(matches!(
            precision_recall_at_k(&idx, &EvalSets::default(), 5),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn report_formats() {
        let idx = index(&[("a", &[0.0]), ("p", &[0.1]), ("n", &[0.5])]);
        let r = evaluate(&idx, &sets(&[("a", "p", true), ("a", "n", false)])).unwrap();
        assert_eq!(r.pre_at_k.len(), K_MAX);
        let tsv = r.to_tsv();
        assert_eq!(tsv.lines().count(), K_MAX + 1);
        assert!(tsv.starts_with("k\tpre_at_k\trec_at_k\n1\t"));
        let back: EvalReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }

    /// Random instance: points in 2D with small integer coordinates (many
    /// ties) and random labels among them.
    fn instance() -> impl Strategy<Value = (Vec<(i32, i32)>, Vec<(usize, usize, bool)>)> {
        (3usize..30).prop_flat_map(|n| {
            (
                proptest::collection::vec((-3i32..4, -3i32..4), n),
                proptest::collection::vec((0..n, 0..n, any::<bool>()), 1..40),
            )
        })
    }

    fn build(points: &[(i32, i32)], labels: &[(usize, usize, bool)]) -> (KnnIndex, EvalSets) {
        let ids: Vec<String> = (0..points.len()).map(|i| format!("p{i:02}")).collect();
        let idx = KnnIndex::new(
            ids.clone(),
            2,
            points.iter().flat_map(|&(x, y)| [x as f64, y as f64]).collect(),
        )
        .unwrap();
        let pairs: Vec<LabeledPair> = labels
            .iter()
            .filter(|(a, b, _)| a != b)
            .map(|&(a, b, y)| LabeledPair::new(&ids[a], &ids[b], y, "golden").unwrap())
            .collect();
        (idx, build_eval_sets(&pairs))
    }

    proptest! {
        #[test]
        fn knn_matches_full_sort(points in proptest::collection::vec((-3i32..4, -3i32..4), 2..60), k in 1usize..60) {
            let (idx, _) = build(&points, &[]);
            let k = k.min(points.len() - 1);
            for q in idx.ids().to_vec() {
                let mut all: Vec<(f64, String)> = idx
                    .ids()
                    .iter()
                    .filter(|&i| *i != q)
                    .map(|i| (idx.distance(&q, i).unwrap(), i.clone()))
                    .collect();
                all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
                let want: Vec<String> = all.into_iter().take(k).map(|(_, i)| i).collect();
                prop_assert_eq!(knn_exact(&idx, &q, k).unwrap(), want);
            }
        }

        #[test]
        fn acc_matches_double_loop((points, labels) in instance()) {
            let (idx, s) = build(&points, &labels);
            prop_assume!(!s.omega.is_empty());
            let mut total = 0.0;
            for a in &s.omega {
                let (mut wins, mut n) = (0.0, 0.0);
                for p in &s.phi[a] {
                    for q in &s.psi[a] {
                        n += 1.0;
                        if idx.distance(a, p).unwrap() < idx.distance(a, q).unwrap() {
                            wins += 1.0;
                        }
                    }
                }
                total += wins / n;
            }
            prop_assert_eq!(acc(&idx, &s).unwrap(), total / s.omega.len() as f64);
        }

        #[test]
        fn acc_is_invariant_under_similarity_maps(
            (points, labels) in instance(),
            shift in (-5i32..5, -5i32..5),
            quarter_turns in 0u8..4,
            scale in 1i32..4,
        ) {
            let (idx, s) = build(&points, &labels);
            prop_assume!(!s.omega.is_empty());
            // Integer rotations, shifts and scalings keep distances exact.
            let moved: Vec<(i32, i32)> = points
                .iter()
                .map(|&(x, y)| {
                    let (mut x, mut y) = (x, y);
                    for _ in 0..quarter_turns {
                        (x, y) = (-y, x);
                    }
                    (scale * x + shift.0, scale * y + shift.1)
                })
                .collect();
            let (idx2, _) = build(&moved, &[]);
            prop_assert_eq!(acc(&idx, &s).unwrap(), acc(&idx2, &s).unwrap());
        }

        #[test]
        fn curves_are_monotone_and_bounded((points, labels) in instance(), k_max in 1usize..40) {
            let (idx, s) = build(&points, &labels);
            prop_assume!(!s.theta.is_empty());
            let c = precision_recall_at_k(&idx, &s, k_max).unwrap();
            for k in 0..k_max {
                prop_assert!((0.0..=1.0).contains(&c.pre_at_k[k]));
                prop_assert!((0.0..=1.0 + 1e-12).contains(&c.rec_at_k[k]));
                if k > 0 {
                    prop_assert!(c.rec_at_k[k] >= c.rec_at_k[k - 1] - 1e-12);
                    prop_assert!((k + 1) as f64 * c.pre_at_k[k] >= k as f64 * c.pre_at_k[k - 1] - 1e-9);
                }
            }
            if k_max >= points.len() - 1 {
                prop_assert!((c.rec_at_k[points.len() - 2] - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn curves_match_brute_force((points, labels) in instance(), k_max in 1usize..40) {
            let (idx, s) = build(&points, &labels);
            prop_assume!(!s.theta.is_empty());
            let c = precision_recall_at_k(&idx, &s, k_max).unwrap();
            let ids = idx.ids().to_vec();
            for k in 1..=k_max {
                let (mut pre, mut rec) = (0.0, 0.0);
                for a in &s.theta {
                    let mut others: Vec<&String> = ids.iter().filter(|i| *i != a).collect();
                    others.sort_by(|x, y| {
                        idx.distance(a, x).unwrap().partial_cmp(&idx.distance(a, y).unwrap()).unwrap().then(x.cmp(y))
                    });
                    let hits = others.iter().take(k).filter(|i| s.phi[a].contains(**i)).count() as f64;
                    pre += hits / k as f64;
                    rec += hits / s.phi[a].len() as f64;
                }
                let n = s.theta.len() as f64;
                prop_assert_eq!(c.pre_at_k[k - 1], pre / n);
                prop_assert_eq!(c.rec_at_k[k - 1], rec / n);
            }
        }
    }
}
