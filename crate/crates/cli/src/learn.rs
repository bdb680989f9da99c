use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use causal_mag::abic::{abic_fit_with, write_trace, AbicConfig, AbicResult, FitOptions, TraceRecord};
use causal_mag::data::Dataset;
use causal_mag::fci::{fci_pag, pag_to_mag, FciConfig};
use causal_mag::graph::{equivalence_pag, Admg, Pag, Skeleton};
use causal_mag::io::{load_skeleton, save_graph, save_pag, save_params, write_json};
use causal_mag::posterior::{infer_posterior, SkeletonPosterior};
use causal_mag::scm::ScmParams;
use causal_mag::spot::{spot_fit_with, GuideConfig};
use clap::{Args, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::config::FileConfig;
use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Abic,
    Spot,
    Fci,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Abic => "abic",
            Method::Spot => "spot",
            Method::Fci => "fci",
        }
    }
}

/// Learner settings shared by `learn` and `bench`.
#[derive(Args, Debug, Clone, Default)]
pub struct LearnOptions {
    /// TOML or JSON config file; flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Significance level of the FCI independence tests.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Largest FCI conditioning set.
    #[arg(long)]
    pub max_cond_size: Option<usize>,
    /// Run the possible-d-separation phase of FCI.
    #[arg(long)]
    pub possible_dsep: bool,
    /// L1 weight of the differentiable learners.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Coefficient threshold of the differentiable learners.
    #[arg(long)]
    pub omega: Option<f64>,
    /// Standardize columns before fitting.
    #[arg(long)]
    pub standardize: bool,
    /// Seed of the differentiable learners and the acceptance draws.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Temperature constant of posterior-guided acceptance.
    #[arg(long)]
    pub guide_c: Option<f64>,
    /// Do not keep shrinking updates unconditionally.
    #[arg(long)]
    pub no_sparsity_prior: bool,
    /// Wall-clock limit in seconds for ABIC/SPOT; the best-so-far graph is
    /// written and the exit code is 4.
    #[arg(long)]
    pub timeout: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Resolved {
    pub abic: AbicConfig,
    pub fci: FciConfig,
    pub guide: GuideConfig,
    pub timeout_secs: Option<f64>,
}

impl LearnOptions {
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let file = FileConfig::load(self.config.as_deref())?;
        let (mut abic, mut fci, mut guide) = (file.abic, file.fci, file.guide);
        if let Some(a) = self.alpha {
            fci.alpha = a;
        }
        if let Some(k) = self.max_cond_size {
            fci.max_cond_size = k;
        }
        fci.use_possible_dsep |= self.possible_dsep;
        if let Some(l) = self.lambda {
            abic.lambda = l;
        }
        if let Some(w) = self.omega {
            abic.omega = w;
        }
        abic.standardize |= self.standardize;
        if let Some(s) = self.seed {
            abic.seed = s;
            guide.seed = s;
        }
        if let Some(c) = self.guide_c {
            guide.c = c;
        }
        if self.no_sparsity_prior {
            guide.sparsity_unconditional = false;
        }
        if self.timeout.is_some_and(|t| !(t > 0.0 && t.is_finite())) {
            return Err(CliError::Config("--timeout must be a positive number of seconds".into()));
        }
        let bad = |e: causal_mag::Error| CliError::Config(e.to_string());
        abic.validate().map_err(bad)?;
        fci.validate().map_err(bad)?;
        guide.validate().map_err(bad)?;
        Ok(Resolved {
            abic,
            fci,
            guide,
            timeout_secs: self.timeout,
        })
    }
}

pub struct Outcome {
    pub mag: Admg,
    pub pag: Pag,
    pub params: Option<ScmParams>,
    pub trace: Vec<TraceRecord>,
    pub timed_out: bool,
    pub summary: serde_json::Value,
}

fn from_fit(fit: AbicResult, seconds: f64) -> Result<Outcome, CliError> {
    let pag = equivalence_pag(&fit.graph)?;
    Ok(Outcome {
        summary: json!({
            "seconds": seconds,
            "omega_used": fit.omega_used,
            "final_h": fit.final_h,
            "converged": fit.converged,
            "timed_out": fit.timed_out,
            "edges": fit.graph.edge_count(),
        }),
        timed_out: fit.timed_out,
        mag: fit.graph,
        pag,
        params: Some(fit.params),
        trace: fit.trace,
    })
}

/// Runs one learner. `posterior` is required for SPOT.
pub fn learn_one(
    method: Method,
    data: &Dataset,
    cfg: &Resolved,
    posterior: Option<&SkeletonPosterior>,
    mask: Option<&Skeleton>,
) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let opts = FitOptions {
        guide: None,
        skeleton: mask,
        timeout: cfg.timeout_secs.map(Duration::from_secs_f64),
    };
    match method {
        Method::Abic => from_fit(abic_fit_with(data, &cfg.abic, opts)?, start.elapsed().as_secs_f64()),
        Method::Spot => {
            let p = posterior.ok_or_else(|| CliError::Config("spot needs a posterior".into()))?;
            from_fit(spot_fit_with(data, p, &cfg.abic, &cfg.guide, opts)?, start.elapsed().as_secs_f64())
        }
        Method::Fci => {
            if mask.is_some() {
                return Err(CliError::Config("a true skeleton applies to abic and spot only".into()));
            }
            let pag = fci_pag(data, &cfg.fci)?;
            let mag = pag_to_mag(&pag)?;
            Ok(Outcome {
                summary: json!({ "seconds": start.elapsed().as_secs_f64(), "edges": mag.edge_count() }),
                mag,
                pag,
                params: None,
                trace: Vec::new(),
                timed_out: false,
            })
        }
    }
}

/// Writes `mag.json`, `pag.json`, `trace.jsonl` and, for the
/// differentiable learners, `params.json`.
pub fn write_outcome(dir: &Path, out: &Outcome) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    save_graph(&dir.join("mag.json"), &out.mag)?;
    save_pag(&dir.join("pag.json"), &out.pag)?;
    if let Some(p) = &out.params {
        save_params(&dir.join("params.json"), p)?;
    }
    let f = std::fs::File::create(dir.join("trace.jsonl"))?;
    write_trace(&out.trace, std::io::BufWriter::new(f))?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct LearnCmd {
    #[arg(long, value_enum)]
    pub method: Method,
    /// Dataset CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Skeleton posterior for spot (`.json` or CSV); inferred with the
    /// model when absent.
    #[arg(long)]
    pub posterior: Option<PathBuf>,
    /// Model used to infer a posterior inline.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Graph JSON whose skeleton constrains abic/spot.
    #[arg(long)]
    pub true_skeleton: Option<PathBuf>,
    #[command(flatten)]
    pub opts: LearnOptions,
}

pub fn run(args: LearnCmd) -> Result<(), CliError> {
    let cfg = args.opts.resolve()?;
    let data = Dataset::load(&args.data)?;
    let mask = args.true_skeleton.as_deref().map(load_skeleton).transpose()?;
    let posterior = match (args.method, &args.posterior) {
        (Method::Spot, Some(p)) => Some(SkeletonPosterior::load(p)?),
        (Method::Spot, None) => Some(infer_posterior(&crate::posterior::load_model(args.model.as_deref())?, &data)?),
        _ => None,
    };
    std::fs::create_dir_all(&args.out)?;
    let mut run = json!({
        "method": args.method,
        "data": args.data,
        "posterior": args.posterior,
        "true_skeleton": args.true_skeleton,
        "config": cfg,
    });
    let result = learn_one(args.method, &data, &cfg, posterior.as_ref(), mask.as_ref());
    match result {
        Ok(out) => {
            write_outcome(&args.out, &out)?;
            run["status"] = json!(if out.timed_out { "timeout" } else { "ok" });
            run["result"] = out.summary.clone();
            write_json(&args.out.join("run.json"), &run)?;
            if out.timed_out {
                return Err(CliError::Timeout(args.out.display().to_string()));
            }
            Ok(())
        }
        Err(e) => {
            run["status"] = json!("failed");
            run["error"] = json!(e.to_string());
            write_json(&args.out.join("run.json"), &run)?;
            Err(e)
        }
    }
}
