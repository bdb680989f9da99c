use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use causal_mag::data::Dataset;
use causal_mag::graph::{equivalence_pag, Pag, Skeleton};
use causal_mag::io::{load_graph, load_pag, read_json, write_json, Manifest, ManifestEntry};
use causal_mag::metrics::{pag_metrics, posterior_quality, shd, PagMetrics};
use causal_mag::posterior::{infer_posterior, SkeletonPosterior};
use clap::Args;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::CliError;
use crate::learn::{learn_one, write_outcome, LearnOptions, Method};

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Ground-truth graph JSON for a single comparison.
    #[arg(long, conflicts_with = "manifest")]
    pub truth: Option<PathBuf>,
    /// Predicted MAG (graph JSON).
    #[arg(long, requires = "truth")]
    pub pred: Option<PathBuf>,
    /// Predicted PAG JSON.
    #[arg(long, requires = "truth", conflicts_with = "pred")]
    pub pred_pag: Option<PathBuf>,
    /// Skeleton posterior to score against the truth.
    #[arg(long, requires = "truth")]
    pub posterior: Option<PathBuf>,
    /// Suite manifest; scores every `<runs>/<name>/<method>/pag.json`.
    #[arg(long, requires = "runs")]
    pub manifest: Option<PathBuf>,
    /// Directory written by `bench`.
    #[arg(long)]
    pub runs: Option<PathBuf>,
    /// Methods to score (default: every method directory found).
    #[arg(long, value_enum, value_delimiter = ',')]
    pub methods: Vec<Method>,
    /// Output file (single comparison) or directory (suite); stdout when
    /// absent for a single comparison.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Metrics of one learner run, flattened.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub name: String,
    pub method: String,
    pub d: usize,
    pub skeleton_f1: f64,
    pub skeleton_tpr: f64,
    pub skeleton_fdr: f64,
    pub arrowhead_f1: f64,
    pub arrowhead_tpr: f64,
    pub arrowhead_fdr: f64,
    pub tail_f1: f64,
    pub tail_tpr: f64,
    pub tail_fdr: f64,
    pub shd: usize,
    pub seconds: Option<f64>,
}

const METRICS: [&str; 10] = [
    "skeleton_f1",
    "skeleton_tpr",
    "skeleton_fdr",
    "arrowhead_f1",
    "arrowhead_tpr",
    "arrowhead_fdr",
    "tail_f1",
    "tail_tpr",
    "tail_fdr",
    "shd",
];

impl RunRecord {
    fn new(name: &str, method: &str, d: usize, m: &PagMetrics, shd: usize, seconds: Option<f64>) -> Self {
        Self {
            name: name.to_owned(),
            method: method.to_owned(),
            d,
            skeleton_f1: m.skeleton.f1,
            skeleton_tpr: m.skeleton.tpr,
            skeleton_fdr: m.skeleton.fdr,
            arrowhead_f1: m.arrowhead.f1,
            arrowhead_tpr: m.arrowhead.tpr,
            arrowhead_fdr: m.arrowhead.fdr,
            tail_f1: m.tail.f1,
            tail_tpr: m.tail.tpr,
            tail_fdr: m.tail.fdr,
            shd,
            seconds,
        }
    }

    fn metric(&self, key: &str) -> f64 {
        match key {
            "skeleton_f1" => self.skeleton_f1,
            "skeleton_tpr" => self.skeleton_tpr,
            "skeleton_fdr" => self.skeleton_fdr,
            "arrowhead_f1" => self.arrowhead_f1,
            "arrowhead_tpr" => self.arrowhead_tpr,
            "arrowhead_fdr" => self.arrowhead_fdr,
            "tail_f1" => self.tail_f1,
            "tail_tpr" => self.tail_tpr,
            "tail_fdr" => self.tail_fdr,
            "shd" => self.shd as f64,
            _ => unreachable!("unknown metric {key}"),
        }
    }
}

fn truth_pag(path: &Path) -> Result<Pag, CliError> {
    Ok(equivalence_pag(&load_graph(path)?)?)
}

/// Mean and sample standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Rows grouped by method and node count, plus an `all` row per method.
pub fn aggregate(records: &[RunRecord]) -> Vec<(String, String, Vec<&RunRecord>)> {
    let mut groups: BTreeMap<(String, usize), Vec<&RunRecord>> = BTreeMap::new();
    let mut all: BTreeMap<String, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.method.clone(), r.d)).or_default().push(r);
        all.entry(r.method.clone()).or_default().push(r);
    }
    let mut out: Vec<_> = groups.into_iter().map(|((m, d), rs)| (m, d.to_string(), rs)).collect();
    out.extend(all.into_iter().map(|(m, rs)| (m, "all".to_owned(), rs)));
    out
}

fn write_summary(dir: &Path, records: &[RunRecord]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let mut jsonl = String::new();
    for r in records {
        jsonl.push_str(&serde_json::to_string(r)?);
        jsonl.push('\n');
    }
    std::fs::write(dir.join("records.jsonl"), jsonl)?;

    let groups = aggregate(records);
    let mut csv = String::from("method,d,runs");
    for m in METRICS {
        csv.push_str(&format!(",{m}_mean,{m}_std"));
    }
    csv.push('\n');
    let mut summary = Vec::new();
    for (method, d, rs) in &groups {
        csv.push_str(&format!("{method},{d},{}", rs.len()));
        let mut stats = serde_json::Map::new();
        for m in METRICS {
            let (mean, std) = mean_std(&rs.iter().map(|r| r.metric(m)).collect::<Vec<_>>());
            csv.push_str(&format!(",{mean:.4},{std:.4}"));
            stats.insert(m.to_owned(), json!({ "mean": mean, "std": std }));
        }
        csv.push('\n');
        summary.push(json!({ "method": method, "d": d, "runs": rs.len(), "metrics": stats }));
    }
    std::fs::write(dir.join("summary.csv"), csv)?;
    write_json(&dir.join("summary.json"), &summary)?;

    let mut plot = String::from("method,d,skeleton_f1,arrowhead_f1,tail_f1\n");
    for (method, d, rs) in groups.iter().filter(|g| g.1 != "all") {
        let f = |k: &str| mean_std(&rs.iter().map(|r| r.metric(k)).collect::<Vec<_>>()).0;
        plot.push_str(&format!("{method},{d},{:.6},{:.6},{:.6}\n", f("skeleton_f1"), f("arrowhead_f1"), f("tail_f1")));
    }
    std::fs::write(dir.join("plot_data.csv"), plot)?;
    Ok(())
}

#[derive(Deserialize)]
struct RunStatus {
    status: String,
    #[serde(default)]
    result: Option<serde_json::Value>,
}

/// Scores every run of a suite. Runs recorded as failed are skipped with a
/// warning; a run with neither output nor status is an error.
pub fn score_runs(manifest_path: &Path, runs: &Path, methods: &[Method]) -> Result<Vec<RunRecord>, CliError> {
    let manifest: Manifest = read_json(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let methods: Vec<Method> = if methods.is_empty() {
        [Method::Abic, Method::Spot, Method::Fci]
            .into_iter()
            .filter(|m| manifest.entries.iter().any(|e| runs.join(&e.name).join(m.name()).is_dir()))
            .collect()
    } else {
        methods.to_vec()
    };
    let jobs: Vec<(&ManifestEntry, Method)> = manifest.entries.iter().flat_map(|e| methods.iter().map(move |&m| (e, m))).collect();
    let scored: Vec<Option<RunRecord>> = jobs
        .par_iter()
        .map(|&(e, m)| {
            let dir = runs.join(&e.name).join(m.name());
            let status: Option<RunStatus> = read_json(&dir.join("run.json")).ok();
            let pag_path = dir.join("pag.json");
            if !pag_path.exists() {
                return match status {
                    Some(s) => {
                        log::warn!("{} / {}: run {}, not scored", e.name, m.name(), s.status);
                        Ok(None)
                    }
                    None => Err(CliError::Other(format!("missing prediction {}", pag_path.display()))),
                };
            }
            let truth = truth_pag(&base.join(&e.graph))?;
            let pred = load_pag(&pag_path)?;
            let metrics = pag_metrics(&pred, &truth)?;
            let seconds = status.and_then(|s| s.result).and_then(|r| r.get("seconds").and_then(|v| v.as_f64()));
            Ok(Some(RunRecord::new(&e.name, m.name(), e.d, &metrics, shd(&pred, &truth)?, seconds)))
        })
        .collect::<Result<_, CliError>>()?;
    Ok(scored.into_iter().flatten().collect())
}

pub fn run_eval(args: EvalArgs) -> Result<(), CliError> {
    if let (Some(manifest), Some(runs)) = (&args.manifest, &args.runs) {
        let records = score_runs(manifest, runs, &args.methods)?;
        return write_summary(args.out.as_deref().unwrap_or(runs), &records);
    }
    let Some(truth_path) = &args.truth else {
        return Err(CliError::Config("give --truth with a prediction, or --manifest with --runs".into()));
    };
    let truth_graph = load_graph(truth_path)?;
    let truth = equivalence_pag(&truth_graph)?;
    let mut report = serde_json::Map::new();
    let pred = match (&args.pred, &args.pred_pag) {
        (Some(p), _) => Some(equivalence_pag(&load_graph(p)?)?),
        (None, Some(p)) => Some(load_pag(p)?),
        (None, None) => None,
    };
    if let Some(pred) = pred {
        report.insert("pag".into(), serde_json::to_value(pag_metrics(&pred, &truth)?)?);
        report.insert("shd".into(), json!(shd(&pred, &truth)?));
    }
    if let Some(p) = &args.posterior {
        let skel: Skeleton = truth_graph.skeleton();
        report.insert("posterior".into(), serde_json::to_value(posterior_quality(&SkeletonPosterior::load(p)?, &skel)?)?);
    }
    if report.is_empty() {
        return Err(CliError::Config("nothing to evaluate: give --pred, --pred-pag or --posterior".into()));
    }
    let text = serde_json::to_string_pretty(&report)?;
    match &args.out {
        Some(path) => std::fs::write(path, text + "\n")?,
        None => {
            use std::io::Write;
            writeln!(std::io::stdout().lock(), "{text}")?;
        }
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Suite manifest written by `simulate`.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "abic,spot,fci")]
    pub methods: Vec<Method>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Cascade used to infer posteriors for spot.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Constrain abic/spot to the true skeleton.
    #[arg(long)]
    pub oracle_skeleton: bool,
    #[command(flatten)]
    pub opts: LearnOptions,
}

enum Status {
    Ok,
    Timeout,
    Diverged,
}

pub fn run_bench(args: BenchArgs) -> Result<(), CliError> {
    let cfg = args.opts.resolve()?;
    if args.oracle_skeleton && args.methods.contains(&Method::Fci) {
        return Err(CliError::Config("--oracle-skeleton applies to abic and spot only".into()));
    }
    let manifest: Manifest = read_json(&args.manifest)?;
    let base = args.manifest.parent().unwrap_or(Path::new(".")).to_path_buf();
    let model = if args.methods.contains(&Method::Spot) {
        Some(crate::posterior::load_model(args.model.as_deref())?)
    } else {
        None
    };
    let runs = args.out.join("runs");
    std::fs::create_dir_all(&runs)?;
    write_json(
        &args.out.join("bench.json"),
        &json!({
            "manifest": args.manifest,
            "methods": args.methods,
            "oracle_skeleton": args.oracle_skeleton,
            "model": args.model,
            "config": cfg,
        }),
    )?;

    let statuses: Vec<Vec<Status>> = manifest
        .entries
        .par_iter()
        .map(|e| {
            let data = Dataset::load(&base.join(&e.data))?;
            let mask = if args.oracle_skeleton {
                Some(load_graph(&base.join(&e.graph))?.skeleton())
            } else {
                None
            };
            let dir = runs.join(&e.name);
            std::fs::create_dir_all(&dir)?;
            let posterior = match &model {
                Some(m) => {
                    let p = infer_posterior(m, &data)?;
                    p.save(&dir.join("posterior.csv"))?;
                    Some(p)
                }
                None => None,
            };
            let mut out = Vec::new();
            for &method in &args.methods {
                let mdir = dir.join(method.name());
                std::fs::create_dir_all(&mdir)?;
                let mut run = json!({ "name": e.name, "method": method });
                let status = match learn_one(method, &data, &cfg, posterior.as_ref(), mask.as_ref()) {
                    Ok(o) => {
                        write_outcome(&mdir, &o)?;
                        run["status"] = json!(if o.timed_out { "timeout" } else { "ok" });
                        run["result"] = o.summary;
                        if o.timed_out {
                            Status::Timeout
                        } else {
                            Status::Ok
                        }
                    }
                    Err(err) => {
                        log::warn!("{} / {}: {err}", e.name, method.name());
                        run["status"] = json!("failed");
                        run["error"] = json!(err.to_string());
                        match err.exit_code() {
                            3 => Status::Diverged,
                            _ => return Err(err),
                        }
                    }
                };
                write_json(&mdir.join("run.json"), &run)?;
                out.push(status);
            }
            Ok(out)
        })
        .collect::<Result<_, CliError>>()?;

    let records = score_runs(&args.manifest, &runs, &args.methods)?;
    write_summary(&args.out, &records)?;
    let flat: Vec<&Status> = statuses.iter().flatten().collect();
    if flat.iter().any(|s| matches!(s, Status::Diverged)) {
        return Err(CliError::Diverged("at least one run diverged; see runs/*/*/run.json".into()));
    }
    if flat.iter().any(|s| matches!(s, Status::Timeout)) {
        return Err(CliError::Timeout(args.out.display().to_string()));
    }
    Ok(())
}
