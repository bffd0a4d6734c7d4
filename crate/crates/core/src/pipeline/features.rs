use crate::error::{Error, Result};
use crate::graph_smooth::{build_network, same_bin_distance_ratio, train_smoothing, PlaceNetwork, SmoothingOutcome, DEFAULT_BIN_SIZE};
use crate::place_model::{Place, CATEGORY_CATALOGUE};
use crate::text_embed::{
    build_vocab, embed_text, normalize, tokenize, train_skipgram, EmbeddingTable, KeyedVectors,
    NormalizerConfig, SgdConfig, SkipgramConfig, SubwordSpec,
};

/// Name and address embedding settings.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub name_dim: usize,
    pub address_dim: usize,
    pub name_min_count: u64,
    pub address_min_count: u64,
    /// Context window for address texts.
    pub address_window: usize,
    /// Subword enrichment for names.
    pub subword: bool,
    pub sgd: SgdConfig,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            name_dim: 50,
            address_dim: 50,
            name_min_count: 2,
            address_min_count: 1,
            address_window: 5,
            subword: true,
            // The name and address corpora are small, so training runs hotter
            // and longer than the word2vec defaults.
            sgd: SgdConfig {
                learning_rate: 0.2,
                epochs: 40,
                ..SgdConfig::default()
            },
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.name_dim == 0 || self.address_dim == 0 {
            return Err(Error::Config("embedding dimensions must be positive".into()));
        }
        if self.address_window == 0 {
            return Err(Error::Config("address window must be positive".into()));
        }
        self.sgd.validate()
    }

    pub fn dim(&self) -> usize {
        self.name_dim + self.address_dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothConfig {
    pub enabled: bool,
    pub bin_size: f64,
    pub sgd: SgdConfig,
}

impl Default for SmoothConfig {
    fn default() -> Self {
        SmoothConfig {
            enabled: true,
            bin_size: DEFAULT_BIN_SIZE,
            sgd: SgdConfig {
                learning_rate: 0.02,
                epochs: 20,
                ..SgdConfig::default()
            },
        }
    }
}

impl SmoothConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bin_size.is_finite() && self.bin_size > 0.0) {
            return Err(Error::Config(format!("bin size must be positive, got {}", self.bin_size)));
        }
        self.sgd.validate()
    }
}

/// Trained text tables and the concatenated per-place features.
#[derive(Debug, Clone)]
pub struct PlaceFeatures {
    pub name_table: EmbeddingTable,
    /// `None` when no place has an address token.
    pub address_table: Option<EmbeddingTable>,
    /// `[name ; address]` per place, keyed by place id.
    pub vectors: KeyedVectors,
    /// Places whose name or address embedding came out empty.
    pub empty_names: usize,
    pub empty_addresses: usize,
}

pub fn name_tokens(places: &[Place]) -> Vec<Vec<String>> {
    let norm = NormalizerConfig::default();
    places.iter().map(|p| normalize(&p.name, &norm)).collect()
}

pub fn address_tokens(places: &[Place]) -> Vec<Vec<String>> {
    places
        .iter()
        .map(|p| p.address.as_deref().map_or_else(Vec::new, |a| tokenize(a, true)))
        .collect()
}

/// Trains the name table (skip-gram with subwords) and address table
/// (skip-gram) and concatenates the averaged text embeddings.
pub fn build_features(places: &[Place], cfg: &FeatureConfig, seed: u64) -> Result<PlaceFeatures> {
    cfg.validate()?;
    let names = name_tokens(places);
    let addresses = address_tokens(places);

    let name_cfg = SkipgramConfig {
        dim: cfg.name_dim,
        window: None,
        sgd: SgdConfig {
            seed,
            ..cfg.sgd.clone()
        },
        subword: cfg.subword.then(SubwordSpec::default),
    };
    let name_vocab = build_vocab(&names, cfg.name_min_count)?;
    let (name_table, _) = train_skipgram(&names, name_vocab, &name_cfg)?;

    let address_table = if addresses.iter().any(|a| !a.is_empty()) {
        let address_cfg = SkipgramConfig {
            dim: cfg.address_dim,
            window: Some(cfg.address_window),
            sgd: SgdConfig {
                seed: seed.wrapping_add(1),
                ..cfg.sgd.clone()
            },
            subword: None,
        };
        let vocab = build_vocab(&addresses, cfg.address_min_count)?;
        Some(train_skipgram(&addresses, vocab, &address_cfg)?.0)
    } else {
        log::warn!("no place has an address; address features are zero");
        None
    };

    let dim = cfg.dim();
    let mut data = Vec::with_capacity(places.len() * dim);
    let (mut empty_names, mut empty_addresses) = (0, 0);
    for (name, address) in names.iter().zip(&addresses) {
        let n = embed_text(name, &name_table);
        empty_names += n.empty as usize;
        data.extend(n.vector);
        match &address_table {
            Some(t) => {
                let a = embed_text(address, t);
                empty_addresses += a.empty as usize;
                data.extend(a.vector);
            }
            None => {
                empty_addresses += 1;
                data.extend(std::iter::repeat_n(0.0, cfg.address_dim));
            }
        }
    }
    let keys = places.iter().map(|p| p.id.clone()).collect();
    Ok(PlaceFeatures {
        name_table,
        address_table,
        vectors: KeyedVectors::new(keys, dim, data)?,
        empty_names,
        empty_addresses,
    })
}

pub fn place_network(places: &[Place], cfg: &SmoothConfig) -> Result<PlaceNetwork> {
    build_network(places, cfg.bin_size, &CATEGORY_CATALOGUE)
}

/// Smoothed features `g(x)` for every place plus the trained map. With
/// smoothing disabled the features are returned unchanged.
pub fn smooth_features(
    places: &[Place],
    features: &KeyedVectors,
    cfg: &SmoothConfig,
    seed: u64,
) -> Result<(KeyedVectors, Option<SmoothingOutcome>)> {
    cfg.validate()?;
    if !cfg.enabled {
        return Ok((features.clone(), None));
    }
    if features.keys.len() != places.len()
        || features.keys.iter().zip(places).any(|(k, p)| *k != p.id)
    {
        return Err(Error::Validation(
            "feature rows must follow the place order".into(),
        ));
    }
    let network = place_network(places, cfg)?;
    let sgd = SgdConfig {
        seed,
        ..cfg.sgd.clone()
    };
    let outcome = train_smoothing(&features.data, features.dim, &network, &sgd)?;
    let smoothed = KeyedVectors::new(features.keys.clone(), features.dim, outcome.smoothed.clone())?;
    Ok((smoothed, Some(outcome)))
}

/// Same-bin to all-pair mean distance ratio of `vectors` over the network of
/// `places`.
pub fn bin_distance_ratio(places: &[Place], vectors: &KeyedVectors, cfg: &SmoothConfig) -> Result<f64> {
    let network = place_network(places, cfg)?;
    Ok(same_bin_distance_ratio(&vectors.data, vectors.dim, &network))
}
