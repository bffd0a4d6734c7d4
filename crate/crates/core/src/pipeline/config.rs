use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use super::features::{FeatureConfig, SmoothConfig};
use crate::error::{Error, Result};
use crate::metric_learn::{DistanceKind, LossKind, TrainConfig};
use crate::place_model::SyntheticConfig;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "PLACEDUP_OUT";
pub const DEFAULT_OUT_DIR: &str = "placedup-out";

/// Ablation presets named after the method codes they reproduce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Smoothed name+address features without metric learning.
    Features,
    Pe,
    Peh,
    Peha,
    Pehad,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::Features,
        Preset::Pe,
        Preset::Peh,
        Preset::Peha,
        Preset::Pehad,
    ];

    /// Sets the loss, distance and component toggles of `cfg`. Returns
    /// `false` for [`Preset::Features`], which trains nothing.
    pub fn apply(self, cfg: &mut TrainConfig) -> bool {
        if self == Preset::Features {
            return false;
        }
        cfg.loss = LossKind::Pairwise;
        cfg.distance = DistanceKind::Euclidean;
        cfg.hard_sampling = matches!(self, Preset::Peh | Preset::Peha | Preset::Pehad);
        cfg.attention = matches!(self, Preset::Peha | Preset::Pehad);
        cfg.denoising = self == Preset::Pehad;
        true
    }
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nf+as+cs" | "features" => Ok(Preset::Features),
            "pe" => Ok(Preset::Pe),
            "peh" => Ok(Preset::Peh),
            "peha" => Ok(Preset::Peha),
            "pehad" => Ok(Preset::Pehad),
            other => Err(Error::Config(format!("unknown preset `{other}`"))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Features => "NF+AS+CS",
            Preset::Pe => "PE",
            Preset::Peh => "PEH",
            Preset::Peha => "PEHA",
            Preset::Pehad => "PEHAD",
        })
    }
}

/// Which vectors `eval` and `knn` score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalTarget {
    /// Metric-model embeddings of the smoothed features.
    Model,
    /// The smoothed features themselves.
    Features,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub out_dir: PathBuf,
    /// Inputs; default to the synth outputs inside `out_dir`.
    pub places: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub eval_labels: Option<PathBuf>,
    pub seed: u64,
    pub synth: SyntheticConfig,
    pub features: FeatureConfig,
    pub smoothing: SmoothConfig,
    pub train: TrainConfig,
    pub eval_target: EvalTarget,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let out_dir = std::env::var_os(OUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
        PipelineConfig {
            out_dir,
            places: None,
            labels: None,
            eval_labels: None,
            seed: 7,
            synth: SyntheticConfig::default(),
            features: FeatureConfig::default(),
            smoothing: SmoothConfig::default(),
            train: TrainConfig::default(),
            eval_target: EvalTarget::Model,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("invalid value `{value}` for `{key}`"))),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|v| parse(key, v.trim()))
        .collect()
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl PipelineConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (k, v) = (key.trim(), value.trim());
        let s = &mut self.synth;
        let f = &mut self.features;
        let m = &mut self.smoothing;
        let t = &mut self.train;
        match k {
            "out_dir" => self.out_dir = PathBuf::from(v),
            "places" => self.places = Some(PathBuf::from(v)),
            "labels" => self.labels = Some(PathBuf::from(v)),
            "eval_labels" => self.eval_labels = Some(PathBuf::from(v)),
            "seed" => self.seed = parse(k, v)?,
            "synth.true_places" => s.n_true_places = parse(k, v)?,
            "synth.dup_rate" => s.dup_rate = parse(k, v)?,
            "synth.flip_rates" => s.flip_rates = parse_list(k, v)?,
            "synth.misspell_prob" => s.misspell_prob = parse(k, v)?,
            "synth.abbreviation_prob" => s.abbreviation_prob = parse(k, v)?,
            "synth.synonym_prob" => s.synonym_prob = parse(k, v)?,
            "synth.city_suffix_prob" => s.city_suffix_prob = parse(k, v)?,
            "synth.address_drop_prob" => s.address_drop_prob = parse(k, v)?,
            "synth.decoration_prob" => s.decoration_prob = parse(k, v)?,
            "synth.coord_jitter" => s.coord_jitter = parse(k, v)?,
            "synth.city_spread" => s.city_spread = parse(k, v)?,
            "synth.address_prob" => s.address_prob = parse(k, v)?,
            "synth.chain_prob" => s.chain_prob = parse(k, v)?,
            "synth.label_coverage" => s.label_coverage = parse(k, v)?,
            "synth.negatives_per_probe" => s.negatives_per_probe = parse(k, v)?,
            "synth.eval_fraction" => s.eval_fraction = parse(k, v)?,
            "embed.name_dim" => f.name_dim = parse(k, v)?,
            "embed.address_dim" => f.address_dim = parse(k, v)?,
            "embed.name_min_count" => f.name_min_count = parse(k, v)?,
            "embed.address_min_count" => f.address_min_count = parse(k, v)?,
            "embed.address_window" => f.address_window = parse(k, v)?,
            "embed.subword" => f.subword = parse_bool(k, v)?,
            "embed.epochs" => f.sgd.epochs = parse(k, v)?,
            "embed.negatives" => f.sgd.negatives = parse(k, v)?,
            "embed.learning_rate" => f.sgd.learning_rate = parse(k, v)?,
            "smooth.enabled" => m.enabled = parse_bool(k, v)?,
            "smooth.bin_size" => m.bin_size = parse(k, v)?,
            "smooth.epochs" => m.sgd.epochs = parse(k, v)?,
            "smooth.negatives" => m.sgd.negatives = parse(k, v)?,
            "smooth.learning_rate" => m.sgd.learning_rate = parse(k, v)?,
            "train.preset" => {
                let preset: Preset = v.parse()?;
                self.eval_target = if preset.apply(t) {
                    EvalTarget::Model
                } else {
                    EvalTarget::Features
                };
            }
            "train.loss" => t.loss = v.parse()?,
            "train.distance" => t.distance = v.parse()?,
            "train.hard" => t.hard_sampling = parse_bool(k, v)?,
            "train.attention" => t.attention = parse_bool(k, v)?,
            "train.denoise" => t.denoising = parse_bool(k, v)?,
            "train.beta" => t.beta = parse(k, v)?,
            "train.rho" => t.rho = parse(k, v)?,
            "train.clusters" => {
                t.clusters = if v == "auto" { None } else { Some(parse(k, v)?) }
            }
            "train.alpha" => t.alpha = parse(k, v)?,
            "train.epochs" => t.epochs = parse(k, v)?,
            "train.batch_size" => t.batch_size = parse(k, v)?,
            "train.learning_rate" => t.learning_rate = parse(k, v)?,
            "train.momentum" => t.momentum = parse(k, v)?,
            "train.hidden" => t.hidden = parse_list(k, v)?,
            "train.key_dim" => t.key_dim = parse(k, v)?,
            "train.value_dim" => t.value_dim = parse(k, v)?,
            "train.refresh_interval" => t.refresh_interval = parse(k, v)?,
            "train.warmup_epochs" => t.warmup_epochs = parse(k, v)?,
            "eval.target" => {
                self.eval_target = match v {
                    "model" => EvalTarget::Model,
                    "features" => EvalTarget::Features,
                    _ => return Err(Error::Config(format!("invalid value `{v}` for `{k}`"))),
                }
            }
            _ => return Err(Error::Config(format!("unknown setting `{k}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: n + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let p = path.as_ref();
        let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        self.apply_text(&text)
    }

    /// Every setting that affects results, one `key=value` per line in a
    /// fixed order. Paths are excluded.
    pub fn canonical(&self) -> String {
        let (s, f, m, t) = (&self.synth, &self.features, &self.smoothing, &self.train);
        let clusters = t.clusters.map_or("auto".to_string(), |c| c.to_string());
        let target = match self.eval_target {
            EvalTarget::Model => "model",
            EvalTarget::Features => "features",
        };
        let entries: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("synth.true_places", s.n_true_places.to_string()),
            ("synth.dup_rate", s.dup_rate.to_string()),
            ("synth.flip_rates", join(&s.flip_rates)),
            ("synth.misspell_prob", s.misspell_prob.to_string()),
            ("synth.abbreviation_prob", s.abbreviation_prob.to_string()),
            ("synth.synonym_prob", s.synonym_prob.to_string()),
            ("synth.city_suffix_prob", s.city_suffix_prob.to_string()),
            ("synth.address_drop_prob", s.address_drop_prob.to_string()),
            ("synth.decoration_prob", s.decoration_prob.to_string()),
            ("synth.coord_jitter", s.coord_jitter.to_string()),
            ("synth.city_spread", s.city_spread.to_string()),
            ("synth.address_prob", s.address_prob.to_string()),
            ("synth.chain_prob", s.chain_prob.to_string()),
            ("synth.label_coverage", s.label_coverage.to_string()),
            ("synth.negatives_per_probe", s.negatives_per_probe.to_string()),
            ("synth.eval_fraction", s.eval_fraction.to_string()),
            ("embed.name_dim", f.name_dim.to_string()),
            ("embed.address_dim", f.address_dim.to_string()),
            ("embed.name_min_count", f.name_min_count.to_string()),
            ("embed.address_min_count", f.address_min_count.to_string()),
            ("embed.address_window", f.address_window.to_string()),
            ("embed.subword", f.subword.to_string()),
            ("embed.epochs", f.sgd.epochs.to_string()),
            ("embed.negatives", f.sgd.negatives.to_string()),
            ("embed.learning_rate", f.sgd.learning_rate.to_string()),
            ("smooth.enabled", m.enabled.to_string()),
            ("smooth.bin_size", m.bin_size.to_string()),
            ("smooth.epochs", m.sgd.epochs.to_string()),
            ("smooth.negatives", m.sgd.negatives.to_string()),
            ("smooth.learning_rate", m.sgd.learning_rate.to_string()),
            ("train.loss", t.loss.to_string()),
            ("train.distance", t.distance.to_string()),
            ("train.hard", t.hard_sampling.to_string()),
            ("train.attention", t.attention.to_string()),
            ("train.denoise", t.denoising.to_string()),
            ("train.beta", t.beta.to_string()),
            ("train.rho", t.rho.to_string()),
            ("train.clusters", clusters),
            ("train.alpha", t.alpha.to_string()),
            ("train.epochs", t.epochs.to_string()),
            ("train.batch_size", t.batch_size.to_string()),
            ("train.learning_rate", t.learning_rate.to_string()),
            ("train.momentum", t.momentum.to_string()),
            ("train.hidden", join(&t.hidden)),
            ("train.key_dim", t.key_dim.to_string()),
            ("train.value_dim", t.value_dim.to_string()),
            ("train.refresh_interval", t.refresh_interval.to_string()),
            ("train.warmup_epochs", t.warmup_epochs.to_string()),
            ("eval.target", target.to_string()),
        ];
        entries
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    /// Hex SHA-256 of [`PipelineConfig::canonical`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Synthetic-data settings with the global seed.
    pub fn synth_config(&self) -> SyntheticConfig {
        SyntheticConfig {
            seed: self.seed,
            bin_size: self.smoothing.bin_size,
            ..self.synth.clone()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed.wrapping_add(3),
            ..self.train.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.synth_config().validate()?;
        self.features.validate()?;
        self.smoothing.validate()?;
        self.train_config().validate()
    }
}
