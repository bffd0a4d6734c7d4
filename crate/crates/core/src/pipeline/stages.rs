use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{EvalTarget, PipelineConfig};
use super::features::{bin_distance_ratio, build_features, smooth_features};
use crate::error::{Error, Result};
use crate::eval::{evaluate, knn_exact, EvalReport, KnnIndex};
use crate::metric_learn::{train, Checkpoint, DistanceKind, MetricModel, TrainLog};
use crate::place_model::{
    build_eval_sets, generate_synthetic, load_labels, load_places, write_ground_truth,
    write_labels, write_places, LabeledPair, PlaceSet,
};
use crate::text_embed::{save_table, KeyedVectors};

/// File layout of a pipeline output directory.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub dir: PathBuf,
}

impl Artifacts {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Artifacts { dir: dir.into() }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn places(&self) -> PathBuf {
        self.path("places.jsonl")
    }
    pub fn labels(&self) -> PathBuf {
        self.path("labels.tsv")
    }
    pub fn eval_labels(&self) -> PathBuf {
        self.path("eval_labels.tsv")
    }
    pub fn ground_truth(&self) -> PathBuf {
        self.path("ground_truth.tsv")
    }
    pub fn name_table(&self) -> PathBuf {
        self.path("name.vec")
    }
    pub fn address_table(&self) -> PathBuf {
        self.path("address.vec")
    }
    pub fn features(&self) -> PathBuf {
        self.path("features.vec")
    }
    pub fn smoothed(&self) -> PathBuf {
        self.path("smoothed.vec")
    }
    pub fn model(&self) -> PathBuf {
        self.path("model.ckpt")
    }
    pub fn report_json(&self) -> PathBuf {
        self.path("report.json")
    }
    pub fn report_tsv(&self) -> PathBuf {
        self.path("report.tsv")
    }
    pub fn manifest(&self, stage: &str) -> PathBuf {
        self.path(&format!("{stage}.manifest.json"))
    }
}

/// Provenance record written next to each stage's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub config_hash: String,
    pub seed: u64,
    pub outputs: Vec<String>,
}

impl StageManifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let p = path.as_ref();
        let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", p.display())))
    }
}

impl PipelineConfig {
    pub fn artifacts(&self) -> Artifacts {
        Artifacts::new(&self.out_dir)
    }

    fn places_path(&self) -> PathBuf {
        self.places.clone().unwrap_or_else(|| self.artifacts().places())
    }

    fn labels_path(&self) -> PathBuf {
        self.labels.clone().unwrap_or_else(|| self.artifacts().labels())
    }

    fn eval_labels_path(&self) -> PathBuf {
        self.eval_labels
            .clone()
            .unwrap_or_else(|| self.artifacts().eval_labels())
    }
}

fn require(path: PathBuf, stage: &'static str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingArtifact { stage, path })
    }
}

fn prepare_dir(cfg: &PipelineConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))
}

fn write_manifest(cfg: &PipelineConfig, stage: &str, outputs: &[PathBuf]) -> Result<()> {
    let manifest = StageManifest {
        stage: stage.to_string(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        outputs: outputs
            .iter()
            .map(|p| {
                p.file_name()
                    .map_or_else(String::new, |n| n.to_string_lossy().into_owned())
            })
            .collect(),
    };
    let path = cfg.artifacts().manifest(stage);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    log::info!("{stage}: config {} seed {}", manifest.config_hash, cfg.seed);
    Ok(())
}

pub fn load_place_set(cfg: &PipelineConfig) -> Result<PlaceSet> {
    PlaceSet::new(load_places(require(cfg.places_path(), "synth")?)?)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthSummary {
    pub places: usize,
    pub labels: usize,
    pub eval_labels: usize,
}

/// Generates synthetic places and labels into the output directory.
pub fn run_synth(cfg: &PipelineConfig) -> Result<SynthSummary> {
    let data = generate_synthetic(&cfg.synth_config())?;
    prepare_dir(cfg)?;
    let a = cfg.artifacts();
    write_places(a.places(), &data.places)?;
    write_labels(a.labels(), &data.labels)?;
    write_labels(a.eval_labels(), &data.eval_labels)?;
    write_ground_truth(a.ground_truth(), &data.ground_truth)?;
    write_manifest(
        cfg,
        "synth",
        &[a.places(), a.labels(), a.eval_labels(), a.ground_truth()],
    )?;
    Ok(SynthSummary {
        places: data.places.len(),
        labels: data.labels.len(),
        eval_labels: data.eval_labels.len(),
    })
}

/// Trains the name and address tables and writes the per-place features.
pub fn run_embed(cfg: &PipelineConfig) -> Result<()> {
    cfg.features.validate()?;
    let places = load_place_set(cfg)?;
    let features = build_features(places.places(), &cfg.features, cfg.seed.wrapping_add(1))?;
    if features.empty_names > 0 {
        log::warn!("{} places have no usable name token", features.empty_names);
    }
    prepare_dir(cfg)?;
    let a = cfg.artifacts();
    save_table(&features.name_table, a.name_table())?;
    let mut outputs = vec![a.name_table()];
    if let Some(t) = &features.address_table {
        save_table(t, a.address_table())?;
        outputs.push(a.address_table());
    }
    features.vectors.write(a.features())?;
    outputs.push(a.features());
    write_manifest(cfg, "embed", &outputs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothSummary {
    pub ratio_before: f64,
    pub ratio_after: f64,
}

/// Smooths the features over the place network.
pub fn run_smooth(cfg: &PipelineConfig) -> Result<SmoothSummary> {
    let places = load_place_set(cfg)?;
    let features = KeyedVectors::read(require(cfg.artifacts().features(), "embed")?)?;
    let (smoothed, _) = smooth_features(
        places.places(),
        &features,
        &cfg.smoothing,
        cfg.seed.wrapping_add(2),
    )?;
    let summary = SmoothSummary {
        ratio_before: bin_distance_ratio(places.places(), &features, &cfg.smoothing)?,
        ratio_after: bin_distance_ratio(places.places(), &smoothed, &cfg.smoothing)?,
    };
    let a = cfg.artifacts();
    smoothed.write(a.smoothed())?;
    write_manifest(cfg, "smooth", &[a.smoothed()])?;
    Ok(summary)
}

fn load_training_labels(cfg: &PipelineConfig, places: &PlaceSet) -> Result<Vec<LabeledPair>> {
    load_labels(require(cfg.labels_path(), "synth")?, places)
}

/// Trains the metric model and writes the checkpoint.
pub fn run_train(cfg: &PipelineConfig) -> Result<TrainLog> {
    let tcfg = cfg.train_config();
    tcfg.validate()?;
    let places = load_place_set(cfg)?;
    let features = KeyedVectors::read(require(cfg.artifacts().smoothed(), "smooth")?)?;
    let labels = load_training_labels(cfg, &places)?;
    let outcome = train(&features, &labels, &tcfg)?;
    let a = cfg.artifacts();
    Checkpoint {
        model: outcome.model,
        centers: outcome.denoising.map(|d| d.centers),
        config_hash: Some(cfg.hash()),
    }
    .save(a.model())?;
    write_manifest(cfg, "train", &[a.model()])?;
    Ok(outcome.log)
}

/// Value embeddings of every feature row. Cosine models are L2-normalized
/// so that squared Euclidean ranking matches cosine ranking.
pub fn model_vectors(model: &MetricModel, features: &KeyedVectors) -> Result<KeyedVectors> {
    let mut data = model.embed_all(&features.data)?;
    let dv = model.shape.value_dim;
    if model.distance == DistanceKind::Cosine {
        for row in data.chunks_exact_mut(dv) {
            let n = crate::math::norm(row);
            if n > 0.0 {
                row.iter_mut().for_each(|v| *v /= n);
            }
        }
    }
    KeyedVectors::new(features.keys.clone(), dv, data)
}

/// The vectors `eval` and `knn` score under the configured target.
pub fn target_vectors(cfg: &PipelineConfig) -> Result<KeyedVectors> {
    let a = cfg.artifacts();
    match cfg.eval_target {
        EvalTarget::Features => KeyedVectors::read(require(a.smoothed(), "smooth")?),
        EvalTarget::Model => {
            let ck = Checkpoint::load(require(a.model(), "train")?)?;
            let features = KeyedVectors::read(require(a.smoothed(), "smooth")?)?;
            model_vectors(&ck.model, &features)
        }
    }
}

/// Scores vectors against labels with ACC and PRE/REC curves.
pub fn evaluate_vectors(vectors: &KeyedVectors, labels: &[LabeledPair]) -> Result<EvalReport> {
    let index = KnnIndex::from_vectors(vectors)?;
    evaluate(&index, &build_eval_sets(labels))
}

/// Evaluates the configured target on the evaluation labels.
pub fn run_eval(cfg: &PipelineConfig) -> Result<EvalReport> {
    let vectors = target_vectors(cfg)?;
    let places = load_place_set(cfg)?;
    let labels = load_labels(require(cfg.eval_labels_path(), "synth")?, &places)?;
    let report = evaluate_vectors(&vectors, &labels)?;
    let a = cfg.artifacts();
    report.write(a.report_json(), a.report_tsv())?;
    write_manifest(cfg, "eval", &[a.report_json(), a.report_tsv()])?;
    Ok(report)
}

/// Nearest neighbors of `query` with their squared distances.
pub fn run_knn(cfg: &PipelineConfig, query: &str, k: usize) -> Result<Vec<(String, f64)>> {
    let index = KnnIndex::from_vectors(&target_vectors(cfg)?)?;
    knn_exact(&index, query, k)?
        .into_iter()
        .map(|id| {
            let d = index.distance(query, &id)?;
            Ok((id, d))
        })
        .collect()
}

/// Plain-text summary of the last evaluation.
pub fn run_report(cfg: &PipelineConfig) -> Result<String> {
    let a = cfg.artifacts();
    let report = EvalReport::read_json(require(a.report_json(), "eval")?)?;
    let manifest = StageManifest::read(require(a.manifest("eval"), "eval")?)?;
    let at = |v: &[f64], k: usize| v.get(k - 1).copied().unwrap_or(f64::NAN);
    Ok(format!(
        "config\t{}\nseed\t{}\nacc\t{:.4}\navg_pre\t{:.5}\navg_rec\t{:.4}\npre@1\t{:.4}\nrec@1\t{:.4}\npre@10\t{:.4}\nrec@10\t{:.4}\nrec@100\t{:.4}\nprobes\t{} acc, {} pre/rec\n",
        manifest.config_hash,
        manifest.seed,
        report.acc,
        report.avg_pre,
        report.avg_rec,
        at(&report.pre_at_k, 1),
        at(&report.rec_at_k, 1),
        at(&report.pre_at_k, 10),
        at(&report.rec_at_k, 10),
        at(&report.rec_at_k, 100),
        report.n_omega,
        report.n_theta,
    ))
}
