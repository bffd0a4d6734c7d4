//! Synthetic place graph with known ground truth.
//!
//! True places get names composed from token pools, duplicates are derived by
//! corrupting a clean page, and each label source samples positives among
//! same-truth pages and near-miss negatives (same grid bin, different truth)
//! before flipping labels at its own noise rate.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, Normal, Poisson};

use super::{Coordinate, LabeledPair, Place, CATEGORY_CATALOGUE};
use crate::error::{Error, Result};
use crate::graph_smooth::bin_of;
use crate::math::{stream_rng, Rng};

/// City pool: `(name, lat, lon)`. The names double as the default gazetteer.
pub const DEFAULT_CITIES: [(&str, f64, f64); 10] = [
    ("springfield", 39.78, -89.65),
    ("riverside", 33.95, -117.40),
    ("new haven", 41.31, -72.92),
    ("san marco", 29.65, -82.32),
    ("fairview", 40.12, -75.30),
    ("oakdale", 37.77, -120.85),
    ("port royal", 32.38, -80.69),
    ("salem", 44.94, -123.04),
    ("lake city", 30.19, -82.64),
    ("greenville", 34.85, -82.40),
];

const BUSINESS_WORDS: &[&str] = &[
    "golden", "dragon", "lucky", "blue", "royal", "silver", "green", "red", "happy", "little",
    "grand", "urban", "rustic", "corner", "sunset", "sunrise", "ocean", "harbor", "valley", "summit",
    "pioneer", "liberty", "eagle", "falcon", "tiger", "lotus", "jade", "pearl", "crystal", "diamond",
    "maple", "willow", "cedar", "birch", "aspen", "magnolia", "orchid", "rose", "ivy", "sage",
    "marco", "luigi", "rosa", "bella", "mario", "tony", "sam", "joe", "maria", "nina",
    "capitol", "metro", "central", "union", "victory", "heritage", "legacy", "frontier", "horizon",
    "coastal", "prairie", "canyon", "meadow", "river", "lakeside", "hilltop", "northern", "southern",
    "eastern", "western", "saint", "mountain", "center", "brothers", "international", "company",
    "family", "friendly", "classic", "modern", "vintage", "fresh", "daily", "prime", "elite",
    "premier", "express", "smart", "bright", "star", "moon", "sun", "comet", "galaxy", "rainbow",
    "thunder", "storm", "breeze", "cloud", "forest", "stone", "iron", "copper", "bronze", "velvet",
    "cherry", "peach", "lemon", "mango", "olive", "pepper", "ginger", "honey", "walnut", "bamboo",
    "panda", "koala",
];

/// Name-token abbreviations applied by the abbreviation corruption.
const NAME_ABBREVIATIONS: [(&str, &str); 6] = [
    ("saint", "st"),
    ("mountain", "mtn"),
    ("center", "ctr"),
    ("brothers", "bros"),
    ("international", "intl"),
    ("company", "co"),
];

/// Type words grouped by category; words in one group are synonyms.
const TYPE_GROUPS: [(&str, &[&str]); 19] = [
    ("Restaurant", &["restaurant", "grill", "kitchen", "diner", "bistro"]),
    ("Cafe", &["cafe", "coffee", "espresso"]),
    ("Bar", &["bar", "pub", "tavern"]),
    ("Shopping", &["store", "shop", "boutique", "outlet"]),
    ("Grocery", &["market", "grocery", "deli"]),
    ("Hotel", &["hotel", "inn", "lodge"]),
    ("Bank", &["bank", "savings"]),
    ("Pharmacy", &["pharmacy", "drugstore", "apothecary"]),
    ("Hospital", &["hospital", "clinic", "medical"]),
    ("School", &["school", "academy"]),
    ("Museum", &["museum", "gallery"]),
    ("Park", &["park", "gardens", "plaza", "square"]),
    ("Gym", &["gym", "fitness"]),
    ("Salon", &["salon", "spa", "barbers"]),
    ("Bakery", &["bakery", "bakeshop", "patisserie"]),
    ("Theater", &["theater", "cinema", "playhouse"]),
    ("Church", &["church", "chapel"]),
    ("Library", &["library"]),
    ("Automotive", &["garage", "auto", "motors"]),
];

const STREET_NAMES: [&str; 40] = [
    "main", "oak", "pine", "elm", "washington", "lincoln", "jefferson", "madison", "lake", "hill",
    "church", "market", "spring", "water", "bridge", "mill", "highland", "forest", "sunset",
    "franklin", "jackson", "cherry", "walnut", "chestnut", "spruce", "poplar", "locust", "laurel",
    "grove", "meadow", "orchard", "ridge", "valley", "prospect", "liberty", "union", "front", "broad",
    "college", "railroad",
];

const STREET_TYPES: [(&str, &str); 8] = [
    ("street", "st"),
    ("avenue", "ave"),
    ("boulevard", "blvd"),
    ("road", "rd"),
    ("lane", "ln"),
    ("drive", "dr"),
    ("way", "wy"),
    ("place", "pl"),
];

const DECORATIONS: [&str; 5] = [" !", " ★", " $", " :)", " #1"];

const SOURCE_NAMES: [&str; 6] = [
    "curation",
    "crowdsourcing",
    "feedback",
    "survey",
    "import",
    "reports",
];

/// Source name used for the clean held-out evaluation labels.
pub const GOLDEN_SOURCE: &str = "golden";

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_true_places: usize,
    /// Mean number of duplicate pages per true place (Poisson).
    pub dup_rate: f64,
    /// One label-flip probability per source; the number of sources is its length.
    pub flip_rates: Vec<f64>,
    pub misspell_prob: f64,
    pub abbreviation_prob: f64,
    pub synonym_prob: f64,
    pub city_suffix_prob: f64,
    pub address_drop_prob: f64,
    pub decoration_prob: f64,
    /// Standard deviation of duplicate coordinate jitter, degrees.
    pub coord_jitter: f64,
    /// Standard deviation of true-place spread around a city center, degrees.
    pub city_spread: f64,
    pub address_prob: f64,
    /// Probability that a true place is a branch reusing an earlier name.
    pub chain_prob: f64,
    /// Fraction of training true places each source probes.
    pub label_coverage: f64,
    pub negatives_per_probe: usize,
    /// Fraction of true places held out for the clean evaluation labels.
    pub eval_fraction: f64,
    pub bin_size: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_true_places: 2000,
            dup_rate: 1.5,
            flip_rates: vec![0.05, 0.15, 0.30],
            misspell_prob: 0.3,
            abbreviation_prob: 0.3,
            synonym_prob: 0.3,
            city_suffix_prob: 0.2,
            address_drop_prob: 0.3,
            decoration_prob: 0.2,
            coord_jitter: 0.002,
            city_spread: 0.02,
            address_prob: 0.67,
            chain_prob: 0.1,
            label_coverage: 0.4,
            negatives_per_probe: 2,
            eval_fraction: 0.2,
            bin_size: 0.01,
            seed: 7,
        }
    }
}

impl SyntheticConfig {
    pub fn n_sources(&self) -> usize {
        self.flip_rates.len()
    }

    pub fn source_names(&self) -> Vec<String> {
        (0..self.n_sources())
            .map(|i| match SOURCE_NAMES.get(i) {
                Some(name) => name.to_string(),
                None => format!("source{i}"),
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_true_places == 0 {
            return Err(Error::Config("n_true_places must be at least 1".into()));
        }
        if !(self.dup_rate.is_finite() && self.dup_rate >= 0.0) {
            return Err(Error::Config(format!(
                "dup_rate must be a non-negative number, got {}",
                self.dup_rate
            )));
        }
        if self.flip_rates.is_empty() {
            return Err(Error::Config("at least one label source is required".into()));
        }
        let probs = [
            ("misspell_prob", self.misspell_prob),
            ("abbreviation_prob", self.abbreviation_prob),
            ("synonym_prob", self.synonym_prob),
            ("city_suffix_prob", self.city_suffix_prob),
            ("address_drop_prob", self.address_drop_prob),
            ("decoration_prob", self.decoration_prob),
            ("address_prob", self.address_prob),
            ("chain_prob", self.chain_prob),
            ("label_coverage", self.label_coverage),
            ("eval_fraction", self.eval_fraction),
        ];
        let flips = self.flip_rates.iter().map(|&p| ("flip_rate", p));
        for (name, p) in probs.into_iter().chain(flips) {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        for (name, v) in [
            ("coord_jitter", self.coord_jitter),
            ("city_spread", self.city_spread),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(self.bin_size.is_finite() && self.bin_size > 0.0) {
            return Err(Error::Config(format!(
                "bin_size must be positive, got {}",
                self.bin_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub places: Vec<Place>,
    /// Noisy multi-source training labels over the training true places.
    pub labels: Vec<LabeledPair>,
    /// Clean labels over the held-out true places.
    pub eval_labels: Vec<LabeledPair>,
    /// Place id -> true place id. Never consumed by training code.
    pub ground_truth: BTreeMap<String, String>,
}

#[derive(Clone)]
struct Address {
    number: u32,
    street: &'static str,
    street_type: usize,
}

#[derive(Clone)]
struct TruePlace {
    business: Vec<&'static str>,
    group: usize,
    type_word: usize,
    city: usize,
    coordinate: Coordinate,
    address: Option<Address>,
    extra_category: Option<usize>,
}

struct Page {
    truth: usize,
    place: Place,
}

const PLACE_STREAM: u64 = 0;
const SPLIT_STREAM: u64 = 1;
const GOLDEN_STREAM: u64 = 2;
const SOURCE_STREAM_BASE: u64 = 16;

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, PLACE_STREAM);

    let truths = sample_true_places(cfg, &mut rng);
    let mut pages = Vec::new();
    let n_dups = if cfg.dup_rate > 0.0 {
        Some(Poisson::new(cfg.dup_rate).map_err(|e| Error::Config(e.to_string()))?)
    } else {
        None
    };
    for (t, truth) in truths.iter().enumerate() {
        pages.push(Page {
            truth: t,
            place: render_clean(truth),
        });
        let dups = n_dups.map_or(0, |d| d.sample(&mut rng) as usize);
        for _ in 0..dups {
            pages.push(Page {
                truth: t,
                place: render_duplicate(truth, cfg, &mut rng),
            });
        }
    }
    pages.shuffle(&mut rng);
    for (i, page) in pages.iter_mut().enumerate() {
        page.place.id = format!("p{i:06}");
    }

    let mut split_rng = stream_rng(cfg.seed, SPLIT_STREAM);
    let mut order: Vec<usize> = (0..truths.len()).collect();
    order.shuffle(&mut split_rng);
    let n_eval = (cfg.eval_fraction * truths.len() as f64).round() as usize;
    let eval_truth: Vec<bool> = {
        let mut v = vec![false; truths.len()];
        for &t in &order[..n_eval] {
            v[t] = true;
        }
        v
    };

    let index = PageIndex::new(&pages, &truths, cfg.bin_size);

    let mut labels = Vec::new();
    for (s, source) in cfg.source_names().into_iter().enumerate() {
        let mut rng = stream_rng(cfg.seed, SOURCE_STREAM_BASE + s as u64);
        let flip = cfg.flip_rates[s];
        let n_sources = cfg.n_sources();
        let mut seen = HashSet::new();
        for t in 0..truths.len() {
            if eval_truth[t] {
                continue;
            }
            // Sources are biased toward a subset of cities.
            let p = if truths[t].city % n_sources == s {
                (cfg.label_coverage * 1.6).min(1.0)
            } else {
                cfg.label_coverage * 0.7
            };
            if !rng.random_bool(p) {
                continue;
            }
            let pairs = probe_pairs(t, &index, cfg.negatives_per_probe, &eval_truth, false, &mut rng);
            for (a, b, y) in pairs {
                let y = if rng.random_bool(flip) { !y } else { y };
                let pair = LabeledPair::new(&pages[a].place.id, &pages[b].place.id, y, &source)?;
                if seen.insert((pair.a.clone(), pair.b.clone())) {
                    labels.push(pair);
                }
            }
        }
    }

    let mut golden_rng = stream_rng(cfg.seed, GOLDEN_STREAM);
    let mut eval_labels = Vec::new();
    let mut seen = HashSet::new();
    for t in 0..truths.len() {
        if !eval_truth[t] || index.by_truth[t].len() < 2 {
            continue;
        }
        let pairs = probe_pairs(
            t,
            &index,
            cfg.negatives_per_probe + 1,
            &eval_truth,
            true,
            &mut golden_rng,
        );
        for (a, b, y) in pairs {
            let pair = LabeledPair::new(&pages[a].place.id, &pages[b].place.id, y, GOLDEN_SOURCE)?;
            if seen.insert((pair.a.clone(), pair.b.clone())) {
                eval_labels.push(pair);
            }
        }
    }

    let ground_truth = pages
        .iter()
        .map(|p| (p.place.id.clone(), format!("t{:05}", p.truth)))
        .collect();
    Ok(SyntheticData {
        places: pages.into_iter().map(|p| p.place).collect(),
        labels,
        eval_labels,
        ground_truth,
    })
}

struct PageIndex {
    truth_of: Vec<usize>,
    city_of_truth: Vec<usize>,
    by_truth: Vec<Vec<usize>>,
    by_bin: BTreeMap<(i64, i64), Vec<usize>>,
    bin_of_page: Vec<Option<(i64, i64)>>,
    by_city: Vec<Vec<usize>>,
    /// Pages of other true places sharing the exact clean name (chain branches).
    by_name: BTreeMap<String, Vec<usize>>,
    clean_name: Vec<String>,
}

impl PageIndex {
    fn new(pages: &[Page], truths: &[TruePlace], bin_size: f64) -> Self {
        let mut by_truth = vec![Vec::new(); truths.len()];
        let mut by_bin: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
        let mut by_city = vec![Vec::new(); DEFAULT_CITIES.len()];
        let mut by_name: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut bin_of_page = Vec::with_capacity(pages.len());
        let mut clean_name = Vec::with_capacity(pages.len());
        for (i, page) in pages.iter().enumerate() {
            by_truth[page.truth].push(i);
            let bin = page.place.coordinate.map(|c| bin_of(c, bin_size));
            if let Some(b) = bin {
                by_bin.entry(b).or_default().push(i);
            }
            bin_of_page.push(bin);
            let truth = &truths[page.truth];
            by_city[truth.city].push(i);
            let name = clean_tokens(truth).join(" ");
            by_name.entry(name.clone()).or_default().push(i);
            clean_name.push(name);
        }
        PageIndex {
            truth_of: pages.iter().map(|p| p.truth).collect(),
            city_of_truth: truths.iter().map(|t| t.city).collect(),
            by_truth,
            by_bin,
            bin_of_page,
            by_city,
            by_name,
            clean_name,
        }
    }
}

/// Positive pairs among the pages of truth `t` plus near-miss negatives for
/// each of its pages. Returned as `(page_a, page_b, is_duplicate)`.
fn probe_pairs(
    t: usize,
    index: &PageIndex,
    negatives_per_probe: usize,
    eval_truth: &[bool],
    allow_any_negative: bool,
    rng: &mut Rng,
) -> Vec<(usize, usize, bool)> {
    let members = &index.by_truth[t];
    let mut out = Vec::new();
    for (i, &a) in members.iter().enumerate() {
        for &b in &members[i + 1..] {
            out.push((a, b, true));
        }
    }
    let usable = |p: usize| {
        let other = index.truth_of[p];
        other != t && (allow_any_negative || !eval_truth[other])
    };
    for &a in members {
        let mut chosen: Vec<usize> = Vec::new();
        // Same-name branches of a chain are the hardest negatives.
        if let Some(branches) = index.by_name.get(&index.clean_name[a]) {
            let cands: Vec<usize> = branches.iter().copied().filter(|&p| usable(p)).collect();
            if let Some(&p) = cands.choose(rng) {
                chosen.push(p);
            }
        }
        if let Some(bin) = index.bin_of_page[a] {
            let mut cands: Vec<usize> = index.by_bin[&bin]
                .iter()
                .copied()
                .filter(|&p| usable(p) && !chosen.contains(&p))
                .collect();
            cands.shuffle(rng);
            let need = negatives_per_probe.saturating_sub(chosen.len());
            chosen.extend(cands.into_iter().take(need));
        }
        let city = &index.by_city[index.city_of_truth[t]];
        let mut attempts = 0;
        while chosen.len() < negatives_per_probe && attempts < 8 * negatives_per_probe {
            attempts += 1;
            if let Some(&p) = city.choose(rng) {
                if usable(p) && !chosen.contains(&p) {
                    chosen.push(p);
                }
            }
        }
        out.extend(chosen.into_iter().map(|n| (a, n, false)));
    }
    out
}

fn sample_true_places(cfg: &SyntheticConfig, rng: &mut Rng) -> Vec<TruePlace> {
    let spread = Normal::new(0.0, cfg.city_spread.max(1e-12)).expect("finite spread");
    let mut truths: Vec<TruePlace> = Vec::with_capacity(cfg.n_true_places);
    for _ in 0..cfg.n_true_places {
        let city = rng.random_range(0..DEFAULT_CITIES.len());
        let (_, clat, clon) = DEFAULT_CITIES[city];
        let coordinate = Coordinate {
            lat: (clat + spread.sample(rng)).clamp(-90.0, 90.0),
            lon: (clon + spread.sample(rng)).clamp(-180.0, 180.0),
        };
        let (business, group, type_word) = if !truths.is_empty() && rng.random_bool(cfg.chain_prob)
        {
            let brand = &truths[rng.random_range(0..truths.len())];
            (brand.business.clone(), brand.group, brand.type_word)
        } else {
            let n_words = if rng.random_bool(0.35) { 2 } else { 1 };
            let business = (0..n_words)
                .map(|_| *BUSINESS_WORDS.choose(rng).expect("non-empty pool"))
                .collect();
            let group = rng.random_range(0..TYPE_GROUPS.len());
            let type_word = rng.random_range(0..TYPE_GROUPS[group].1.len());
            (business, group, type_word)
        };
        let address = rng.random_bool(cfg.address_prob).then(|| {
            let street = STREET_NAMES[(city * 4 + rng.random_range(0..8)) % STREET_NAMES.len()];
            Address {
                number: rng.random_range(1..400),
                street,
                street_type: rng.random_range(0..STREET_TYPES.len()),
            }
        });
        let extra_category = rng
            .random_bool(0.1)
            .then(|| rng.random_range(0..CATEGORY_CATALOGUE.len()))
            .filter(|&c| c != group);
        truths.push(TruePlace {
            business,
            group,
            type_word,
            city,
            coordinate,
            address,
            extra_category,
        });
    }
    truths
}

fn clean_tokens(t: &TruePlace) -> Vec<&'static str> {
    let mut tokens = t.business.clone();
    tokens.push(TYPE_GROUPS[t.group].1[t.type_word]);
    tokens
}

fn title_case(tokens: &[String]) -> String {
    tokens
        .iter()
        .map(|tok| {
            let mut chars = tok.chars();
            match chars.next() {
                Some(c) => c.to_uppercase().chain(chars).collect::<String>(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn categories_of(t: &TruePlace) -> BTreeSet<String> {
    let mut cats = BTreeSet::new();
    cats.insert(TYPE_GROUPS[t.group].0.to_string());
    if let Some(c) = t.extra_category {
        cats.insert(CATEGORY_CATALOGUE[c].to_string());
    }
    cats
}

fn render_address(a: &Address, city: usize, abbreviate: bool) -> String {
    let (full, short) = STREET_TYPES[a.street_type];
    let stype = if abbreviate { short } else { full };
    let city = title_case(&[DEFAULT_CITIES[city].0.to_string()]);
    format!(
        "{} {} {}, {}",
        a.number,
        title_case(&[a.street.to_string()]),
        title_case(&[stype.to_string()]),
        city
    )
}

fn render_clean(t: &TruePlace) -> Place {
    let tokens: Vec<String> = clean_tokens(t).into_iter().map(String::from).collect();
    Place {
        id: String::new(),
        name: title_case(&tokens),
        address: t.address.as_ref().map(|a| render_address(a, t.city, false)),
        coordinate: Some(t.coordinate),
        categories: categories_of(t),
    }
}

fn misspell(token: &str, rng: &mut Rng) -> String {
    let chars: Vec<char> = token.chars().collect();
    let n = chars.len();
    let mut out = chars.clone();
    if rng.random_bool(0.5) {
        let j = rng.random_range(1..n - 1);
        out.swap(j, j + 1);
    }
    if out == chars {
        out.remove(rng.random_range(1..n));
    }
    out.into_iter().collect()
}

fn render_duplicate(t: &TruePlace, cfg: &SyntheticConfig, rng: &mut Rng) -> Place {
    let mut tokens: Vec<String> = t.business.iter().map(|s| s.to_string()).collect();
    let group_words = TYPE_GROUPS[t.group].1;
    let type_word = if group_words.len() > 1 && rng.random_bool(cfg.synonym_prob) {
        let others: Vec<&str> = group_words
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != t.type_word)
            .map(|(_, w)| *w)
            .collect();
        *others.choose(rng).expect("synonym group has other words")
    } else {
        group_words[t.type_word]
    };
    tokens.push(type_word.to_string());

    if rng.random_bool(cfg.abbreviation_prob) {
        for tok in tokens.iter_mut() {
            if let Some((_, short)) = NAME_ABBREVIATIONS.iter().find(|(long, _)| long == tok) {
                *tok = short.to_string();
            }
        }
    }
    if rng.random_bool(cfg.misspell_prob) {
        let long: Vec<usize> = (0..tokens.len())
            .filter(|&i| tokens[i].chars().count() >= 4)
            .collect();
        if let Some(&i) = long.choose(rng) {
            tokens[i] = misspell(&tokens[i], rng);
        }
    }
    if rng.random_bool(cfg.city_suffix_prob) {
        tokens.extend(DEFAULT_CITIES[t.city].0.split(' ').map(String::from));
    }
    let mut name = title_case(&tokens);
    if rng.random_bool(cfg.decoration_prob) {
        if rng.random_bool(0.5) {
            name = name.to_uppercase();
        }
        name.push_str(DECORATIONS.choose(rng).expect("non-empty"));
    }

    let address = match &t.address {
        Some(_) if rng.random_bool(cfg.address_drop_prob) => None,
        Some(a) => Some(render_address(a, t.city, rng.random_bool(cfg.abbreviation_prob))),
        None => None,
    };
    let coordinate = if cfg.coord_jitter > 0.0 {
        let jitter = Normal::new(0.0, cfg.coord_jitter).expect("finite jitter");
        Coordinate {
            lat: (t.coordinate.lat + jitter.sample(rng)).clamp(-90.0, 90.0),
            lon: (t.coordinate.lon + jitter.sample(rng)).clamp(-180.0, 180.0),
        }
    } else {
        t.coordinate
    };
    Place {
        id: String::new(),
        name,
        address,
        coordinate: Some(coordinate),
        categories: categories_of(t),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::place_model::{build_eval_sets, PlaceSet};

    fn small(seed: u64) -> SyntheticConfig {
        SyntheticConfig {
            n_true_places: 100,
            dup_rate: 1.5,
            seed,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn zero_dup_rate_gives_one_page_per_truth() {
        let data = generate_synthetic(&SyntheticConfig {
            dup_rate: 0.0,
            flip_rates: vec![0.0, 0.0, 0.0],
            ..small(3)
        })
        .unwrap();
        assert_eq!(data.places.len(), 100);
        let truths: BTreeSet<_> = data.ground_truth.values().collect();
        assert_eq!(truths.len(), 100);
        assert!(data.labels.iter().all(|l| !l.duplicate));
    }

    #[test]
    fn noiseless_labels_agree_with_ground_truth() {
        let data = generate_synthetic(&SyntheticConfig {
            flip_rates: vec![0.0, 0.0, 0.0],
            ..small(11)
        })
        .unwrap();
        assert!(!data.labels.is_empty());
        for l in data.labels.iter().chain(&data.eval_labels) {
            let same = data.ground_truth[&l.a] == data.ground_truth[&l.b];
            assert_eq!(same, l.duplicate, "{l:?}");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_synthetic(&small(7)).unwrap();
        let b = generate_synthetic(&small(7)).unwrap();
        assert_eq!(a.places, b.places);
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.eval_labels, b.eval_labels);
        assert_eq!(a.ground_truth, b.ground_truth);
        let c = generate_synthetic(&small(8)).unwrap();
        assert_ne!(a.places, c.places);
    }

    #[test]
    fn flip_rates_do_not_change_the_places() {
        let a = generate_synthetic(&small(5)).unwrap();
        let b = generate_synthetic(&SyntheticConfig {
            flip_rates: vec![0.05, 0.15, 0.4],
            ..small(5)
        })
        .unwrap();
        assert_eq!(a.places, b.places);
    }

    #[test]
    fn outputs_are_valid_datasets() {
        let data = generate_synthetic(&small(2)).unwrap();
        let set = PlaceSet::new(data.places.clone()).unwrap();
        for l in data.labels.iter().chain(&data.eval_labels) {
            assert!(l.a < l.b);
            assert!(set.index_of(&l.a).is_some() && set.index_of(&l.b).is_some());
        }
        let sets = build_eval_sets(&data.eval_labels);
        assert!(!sets.omega.is_empty());
        // Held-out truths never appear in training positives.
        let eval_truths: BTreeSet<&String> = data
            .eval_labels
            .iter()
            .filter(|l| l.duplicate)
            .map(|l| &data.ground_truth[&l.a])
            .collect();
        for l in data.labels.iter().filter(|l| l.duplicate) {
            assert!(!eval_truths.contains(&data.ground_truth[&l.a]));
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for cfg in [
            SyntheticConfig {
                n_true_places: 0,
                ..small(1)
            },
            SyntheticConfig {
                dup_rate: -1.0,
                ..small(1)
            },
            SyntheticConfig {
                misspell_prob: 1.5,
                ..small(1)
            },
            SyntheticConfig {
                flip_rates: vec![0.1, -0.2],
                ..small(1)
            },
        ] {
            assert!(matches!(generate_synthetic(&cfg), Err(Error::Config(_))));
        }
    }
}
