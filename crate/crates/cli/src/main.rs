use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use placedup::pipeline::{self, PipelineConfig};
use placedup::Error;

/// Place deduplication pipeline over on-disk artifacts.
///
/// Settings are resolved in order: built-in defaults, `--config` file,
/// `--preset`, individual flags, then `--set` overrides. The output directory
/// defaults to $PLACEDUP_OUT or `placedup-out`.
#[derive(Parser)]
#[command(name = "placedup", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic place set with noisy multi-source labels.
    Synth,
    /// Train name/address embeddings and write per-place features.
    Embed,
    /// Smooth features over the coordinate/category place network.
    Smooth,
    /// Train the metric model on labeled pairs.
    Train,
    /// Score the model (or, with `--preset features`, the smoothed features).
    Eval,
    /// Print the nearest neighbors of one place.
    Knn {
        #[arg(long)]
        query: String,
        #[arg(short, long, default_value_t = 10)]
        k: usize,
    },
    /// Summarize the last evaluation.
    Report,
    /// Run synth (unless --places is given), embed, smooth, train and eval.
    Run,
}

#[derive(Args)]
struct Opts {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Extra `key=value` setting; repeatable, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    places: Option<PathBuf>,
    #[arg(long, global = true)]
    labels: Option<PathBuf>,
    #[arg(long, global = true)]
    eval_labels: Option<PathBuf>,
    #[arg(long, global = true)]
    true_places: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    dup_rate: Option<String>,
    /// nf+as+cs, pe, peh, peha or pehad.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// pairwise or triplet.
    #[arg(long, global = true)]
    loss: Option<String>,
    /// euclidean, cosine or bilinear.
    #[arg(long, global = true)]
    distance: Option<String>,
    #[arg(long, global = true)]
    hard: bool,
    #[arg(long, global = true)]
    attention: bool,
    #[arg(long, global = true)]
    denoise: bool,
}

impl Opts {
    fn resolve(&self) -> placedup::Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let mut settings: Vec<(&str, String)> = Vec::new();
        let mut put = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                settings.push((k, v));
            }
        };
        put("train.preset", self.preset.clone());
        put("out_dir", self.out.as_ref().map(|p| p.display().to_string()));
        put("seed", self.seed.map(|s| s.to_string()));
        put("places", self.places.as_ref().map(|p| p.display().to_string()));
        put("labels", self.labels.as_ref().map(|p| p.display().to_string()));
        put("eval_labels", self.eval_labels.as_ref().map(|p| p.display().to_string()));
        put("synth.true_places", self.true_places.clone());
        put("synth.dup_rate", self.dup_rate.clone());
        put("train.loss", self.loss.clone());
        put("train.distance", self.distance.clone());
        put("train.hard", self.hard.then(|| "true".into()));
        put("train.attention", self.attention.then(|| "true".into()));
        put("train.denoise", self.denoise.then(|| "true".into()));
        for (k, v) in settings {
            cfg.set(k, &v)?;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected KEY=VALUE, got `{kv}`")))?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: &Cli) -> placedup::Result<()> {
    let cfg = cli.opts.resolve()?;
    match &cli.command {
        Command::Synth => {
            let s = pipeline::run_synth(&cfg)?;
            println!(
                "{} places, {} training labels, {} evaluation labels in {}",
                s.places,
                s.labels,
                s.eval_labels,
                cfg.out_dir.display()
            );
        }
        Command::Embed => pipeline::run_embed(&cfg)?,
        Command::Smooth => {
            let s = pipeline::run_smooth(&cfg)?;
            println!(
                "same-bin distance ratio {:.4} -> {:.4}",
                s.ratio_before, s.ratio_after
            );
        }
        Command::Train => {
            let log = pipeline::run_train(&cfg)?;
            if let Some(l) = log.epoch_loss.last() {
                println!("{} epochs, final epoch loss {l:.4}", log.epoch_loss.len());
            }
        }
        Command::Eval => {
            let r = pipeline::run_eval(&cfg)?;
            println!(
                "acc {:.4}  avg_pre {:.5}  avg_rec {:.4}",
                r.acc, r.avg_pre, r.avg_rec
            );
        }
        Command::Knn { query, k } => {
            for (id, d) in pipeline::run_knn(&cfg, query, *k)? {
                println!("{id}\t{d:.6}");
            }
        }
        Command::Report => print!("{}", pipeline::run_report(&cfg)?),
        Command::Run => {
            if cfg.places.is_none() {
                pipeline::run_synth(&cfg)?;
            }
            pipeline::run_embed(&cfg)?;
            pipeline::run_smooth(&cfg)?;
            if cfg.eval_target == pipeline::EvalTarget::Model {
                pipeline::run_train(&cfg)?;
            }
            pipeline::run_eval(&cfg)?;
            print!("{}", pipeline::run_report(&cfg)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::MissingArtifact { .. } => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
