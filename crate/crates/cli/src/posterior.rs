use std::path::{Path, PathBuf};

use causal_mag::data::Dataset;
use causal_mag::graph::Skeleton;
use causal_mag::io::{load_skeleton, read_json, write_json, Manifest};
use causal_mag::metrics::posterior_quality;
use causal_mag::posterior::{adapt_model, bootstrap_dynamic_corpus, infer_posterior, train_cascade, CascadeModel, SkeletonPosterior};
use causal_mag::scm::generate_corpus;
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::FileConfig;
use crate::error::CliError;
use crate::simulate::SuiteArgs;

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Suite manifest to train on; simulated inline when absent.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[command(flatten)]
    pub suite: SuiteArgs,
    /// Graphs to simulate when no corpus is given.
    #[arg(long, default_value_t = 200)]
    pub graphs: usize,
    /// Share of the corpus kept out of training for the report.
    #[arg(long, default_value_t = 0.1)]
    pub held_out: f64,
    /// Model output path (default: `$MAGDISC_MODEL_DIR/cascade.json`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report path (default: next to the model, `.report.json`).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Seed for the training split and boosting.
    #[arg(long)]
    pub train_seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Datasets of a manifest with the skeletons of their graphs.
pub fn load_corpus(manifest: &Path) -> Result<Vec<(Dataset, Skeleton)>, CliError> {
    let m: Manifest = read_json(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    m.entries
        .par_iter()
        .map(|e| Ok((Dataset::load(&base.join(&e.data))?, load_skeleton(&base.join(&e.graph))?)))
        .collect()
}

#[derive(Serialize)]
struct HeldOutRecord {
    index: usize,
    d: usize,
    auroc: Option<f64>,
    auprc: Option<f64>,
    kl: f64,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn run_train(args: TrainArgs) -> Result<(), CliError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let mut cfg = file.cascade;
    if let Some(s) = args.train_seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    if !(0.0..1.0).contains(&args.held_out) {
        return Err(CliError::Config("--held-out must lie in [0, 1)".into()));
    }
    let (corpus, source) = match &args.corpus {
        Some(p) => (load_corpus(p)?, json!({ "manifest": p })),
        None => {
            let (sampler, range) = args.suite.sampler()?;
            (generate_corpus(args.graphs, &sampler, range, args.suite.n)?, args.suite.echo(args.graphs)?)
        }
    };
    if corpus.is_empty() {
        return Err(CliError::Config("training corpus is empty".into()));
    }
    let n_test = ((corpus.len() as f64 * args.held_out).round() as usize).min(corpus.len() - 1);
    let (train, test) = corpus.split_at(corpus.len() - n_test);
    let (model, report) = train_cascade(train, &cfg)?;

    let held_out: Vec<HeldOutRecord> = test
        .par_iter()
        .enumerate()
        .map(|(k, (data, truth))| {
            let q = posterior_quality(&infer_posterior(&model, data)?, truth)?;
            Ok(HeldOutRecord {
                index: train.len() + k,
                d: data.d(),
                auroc: q.auroc,
                auprc: q.auprc,
                kl: q.kl,
            })
        })
        .collect::<Result<_, causal_mag::Error>>()?;

    let out = args.out.unwrap_or_else(crate::default_model_path);
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    model.save(&out)?;
    let report_path = args.report.unwrap_or_else(|| out.with_extension("report.json"));
    write_json(
        &report_path,
        &json!({
            "config": { "cascade": cfg, "corpus": source, "held_out_fraction": args.held_out },
            "model": out,
            "training": report,
            "held_out": {
                "count": held_out.len(),
                "auroc": mean(held_out.iter().filter_map(|r| r.auroc)),
                "auprc": mean(held_out.iter().filter_map(|r| r.auprc)),
                "kl": mean(held_out.iter().map(|r| r.kl)),
                "graphs": held_out,
            },
        }),
    )?;
    log::info!("model written to {}", out.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct PosteriorArgs {
    /// Trained cascade (default: `$MAGDISC_MODEL_DIR/cascade.json`).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Dataset CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Output matrix: `.json` or headerless CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Adapt the model to this dataset by bootstrap regeneration first.
    #[arg(long)]
    pub dynamic_adapt: bool,
    /// Bootstrap replicas for adaptation.
    #[arg(long)]
    pub replicas: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Graph JSON; when given, posterior quality is written next to the output.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

pub fn load_model(path: Option<&Path>) -> Result<CascadeModel, CliError> {
    let path = path.map(Path::to_path_buf).unwrap_or_else(crate::default_model_path);
    CascadeModel::load(&path).map_err(|e| match e {
        causal_mag::Error::Io(io) => CliError::Other(format!("cannot read model {}: {io}", path.display())),
        e => e.into(),
    })
}

pub fn run_posterior(args: PosteriorArgs) -> Result<(), CliError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let mut boot = file.bootstrap;
    let mut adapt = file.adapt;
    if let Some(r) = args.replicas {
        boot.replicas = r;
    }
    if let Some(s) = args.seed {
        boot.seed = s;
        adapt.seed = s;
    }
    boot.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let model = load_model(args.model.as_deref())?;
    let data = Dataset::load(&args.data)?;
    let posterior: SkeletonPosterior = if args.dynamic_adapt {
        let corpus = bootstrap_dynamic_corpus(&data, &boot)?;
        if corpus.is_empty() {
            return Err(CliError::Other("every bootstrap replica failed".into()));
        }
        adapt_model(&model, &corpus, &adapt)?.infer(&data)?
    } else {
        infer_posterior(&model, &data)?
    };
    posterior.save(&args.out)?;
    let quality = match &args.truth {
        Some(t) => Some(posterior_quality(&posterior, &load_skeleton(t)?)?),
        None => None,
    };
    let mut run = json!({
        "config": {
            "model": args.model.unwrap_or_else(crate::default_model_path),
            "data": args.data,
            "dynamic_adapt": args.dynamic_adapt,
        },
        "quality": quality,
    });
    if args.dynamic_adapt {
        run["config"]["bootstrap"] = serde_json::to_value(&boot)?;
        run["config"]["adapt"] = serde_json::to_value(&adapt)?;
    }
    write_json(&sidecar(&args.out), &run)?;
    Ok(())
}

/// `out.csv` -> `out.run.json`.
pub fn sidecar(out: &Path) -> PathBuf {
    out.with_extension("run.json")
}
