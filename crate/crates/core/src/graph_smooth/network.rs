use std::collections::{BTreeMap, HashMap};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::math::Rng;
use crate::place_model::{Coordinate, Place};

/// Grid cell `(floor(lat / size), floor(lon / size))`.
pub type Bin = (i64, i64);

pub fn bin_of(c: Coordinate, size: f64) -> Bin {
    ((c.lat / size).floor() as i64, (c.lon / size).floor() as i64)
}

/// Which of the two typed edge sets an edge belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    Coordinate,
    Category,
}

/// Place network with coordinate edges (same grid bin) and category edges
/// (at least one shared category).
///
/// Edges are never materialized: bins and category member lists are stored
/// and neighbors are enumerated on demand.
#[derive(Debug, Clone)]
pub struct PlaceNetwork {
    bin_size: f64,
    place_bin: Vec<Option<Bin>>,
    bins: BTreeMap<Bin, Vec<usize>>,
    place_categories: Vec<Vec<usize>>,
    category_members: Vec<Vec<usize>>,
    catalogue: Vec<String>,
    coordinate_sampler: Option<(Vec<Bin>, WeightedIndex<f64>)>,
    category_sampler: Option<WeightedIndex<f64>>,
}

fn pair_count(n: usize) -> f64 {
    (n * n.saturating_sub(1) / 2) as f64
}

/// Groups places into square bins of `bin_size` degrees and links places that
/// share a bin or a catalogue category. Categories outside `catalogue` are
/// ignored.
pub fn build_network<S: AsRef<str>>(
    places: &[Place],
    bin_size: f64,
    catalogue: &[S],
) -> Result<PlaceNetwork> {
    if !(bin_size.is_finite() && bin_size > 0.0) {
        return Err(Error::Config(format!("bin size must be positive, got {bin_size}")));
    }
    let catalogue: Vec<String> = catalogue.iter().map(|c| c.as_ref().to_string()).collect();
    let cat_index: HashMap<&str, usize> = catalogue
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let mut bins: BTreeMap<Bin, Vec<usize>> = BTreeMap::new();
    let mut place_bin = Vec::with_capacity(places.len());
    let mut place_categories = Vec::with_capacity(places.len());
    let mut category_members = vec![Vec::new(); catalogue.len()];
    for (i, p) in places.iter().enumerate() {
        let bin = p.coordinate.map(|c| bin_of(c, bin_size));
        if let Some(b) = bin {
            bins.entry(b).or_default().push(i);
        }
        place_bin.push(bin);
        let mut cats: Vec<usize> = p
            .categories
            .iter()
            .filter_map(|c| cat_index.get(c.as_str()).copied())
            .collect();
        cats.sort_unstable();
        cats.dedup();
        for &c in &cats {
            category_members[c].push(i);
        }
        place_categories.push(cats);
    }

    let bin_keys: Vec<Bin> = bins.keys().copied().collect();
    let coordinate_sampler = WeightedIndex::new(bins.values().map(|m| pair_count(m.len())))
        .ok()
        .map(|w| (bin_keys, w));
    let category_sampler =
        WeightedIndex::new(category_members.iter().map(|m| pair_count(m.len()))).ok();

    Ok(PlaceNetwork {
        bin_size,
        place_bin,
        bins,
        place_categories,
        category_members,
        catalogue,
        coordinate_sampler,
        category_sampler,
    })
}

impl PlaceNetwork {
    pub fn len(&self) -> usize {
        self.place_bin.len()
    }

    pub fn is_empty(&self) -> bool {
        self.place_bin.is_empty()
    }

    pub fn bin_size(&self) -> f64 {
        self.bin_size
    }

    pub fn bin(&self, i: usize) -> Option<Bin> {
        self.place_bin[i]
    }

    /// Occupied bins and their members.
    pub fn bins(&self) -> &BTreeMap<Bin, Vec<usize>> {
        &self.bins
    }

    pub fn catalogue(&self) -> &[String] {
        &self.catalogue
    }

    pub fn coordinate_neighbors(&self, i: usize) -> Vec<usize> {
        match self.place_bin[i] {
            Some(b) => self.bins[&b].iter().copied().filter(|&j| j != i).collect(),
            None => Vec::new(),
        }
    }

    /// Sorted, without duplicates.
    pub fn category_neighbors(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.place_categories[i]
            .iter()
            .flat_map(|&c| self.category_members[c].iter().copied())
            .filter(|&j| j != i)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn neighbors(&self, i: usize, kind: EdgeKind) -> Vec<usize> {
        match kind {
            EdgeKind::Coordinate => self.coordinate_neighbors(i),
            EdgeKind::Category => self.category_neighbors(i),
        }
    }

    pub fn has_edge(&self, i: usize, j: usize, kind: EdgeKind) -> bool {
        if i == j {
            return false;
        }
        match kind {
            EdgeKind::Coordinate => {
                matches!((self.place_bin[i], self.place_bin[j]), (Some(a), Some(b)) if a == b)
            }
            EdgeKind::Category => self.shared_categories(i, j) > 0,
        }
    }

    fn shared_categories(&self, i: usize, j: usize) -> usize {
        let (a, b) = (&self.place_categories[i], &self.place_categories[j]);
        a.iter().filter(|c| b.binary_search(c).is_ok()).count()
    }

    pub fn coordinate_degree(&self, i: usize) -> usize {
        self.place_bin[i].map_or(0, |b| self.bins[&b].len() - 1)
    }

    pub fn category_degree(&self, i: usize) -> usize {
        match self.place_categories[i].as_slice() {
            [] => 0,
            [c] => self.category_members[*c].len() - 1,
            _ => self.category_neighbors(i).len(),
        }
    }

    /// Number of typed edges incident to `i`.
    pub fn degree(&self, i: usize) -> usize {
        self.coordinate_degree(i) + self.category_degree(i)
    }

    pub fn coordinate_edge_count(&self) -> usize {
        self.bins.values().map(|m| pair_count(m.len()) as usize).sum()
    }

    pub fn category_edge_count(&self) -> usize {
        (0..self.len()).map(|i| self.category_degree(i)).sum::<usize>() / 2
    }

    pub fn has_edges(&self, kind: EdgeKind) -> bool {
        match kind {
            EdgeKind::Coordinate => self.coordinate_sampler.is_some(),
            EdgeKind::Category => self.category_sampler.is_some(),
        }
    }

    /// Uniformly random edge of the given kind as `(center, context)` in a
    /// random orientation, or `None` when the edge set is empty.
    pub fn sample_edge(&self, kind: EdgeKind, rng: &mut Rng) -> Option<(usize, usize)> {
        let (i, j) = match kind {
            EdgeKind::Coordinate => {
                let (keys, w) = self.coordinate_sampler.as_ref()?;
                two_distinct(&self.bins[&keys[w.sample(rng)]], rng)
            }
            EdgeKind::Category => {
                let w = self.category_sampler.as_ref()?;
                loop {
                    let (i, j) = two_distinct(&self.category_members[w.sample(rng)], rng);
                    // Pairs sharing several categories would otherwise be
                    // over-represented.
                    let shared = self.shared_categories(i, j);
                    if shared == 1 || rng.random_bool(1.0 / shared as f64) {
                        break (i, j);
                    }
                }
            }
        };
        Some((i, j))
    }
}

fn two_distinct(members: &[usize], rng: &mut Rng) -> (usize, usize) {
    let n = members.len();
    let a = rng.random_range(0..n);
    let mut b = rng.random_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    (members[a], members[b])
}
