use std::path::{Path, PathBuf};

use causal_mag::io::{save_graph, save_params, write_json, Manifest, ManifestEntry};
use causal_mag::scm::{generate_suite, GraphSamplerConfig, Topology};
use clap::{Args, ValueEnum};
use serde_json::json;

use crate::config::{parse_interval, NodeRange};
use crate::error::CliError;

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum TopologyArg {
    Er,
    Sf,
}

impl From<TopologyArg> for Topology {
    fn from(t: TopologyArg) -> Self {
        match t {
            TopologyArg::Er => Topology::ErdosRenyi,
            TopologyArg::Sf => Topology::ScaleFree,
        }
    }
}

/// Options shared by every command that simulates graphs.
#[derive(Args, Debug, Clone)]
pub struct SuiteArgs {
    /// Node count, or an inclusive range such as 50..100.
    #[arg(long, default_value = "30")]
    pub d: NodeRange,
    /// Samples per dataset.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "er")]
    pub topology: TopologyArg,
    /// Mean-indegree interval `lo,hi`.
    #[arg(long, value_parser = parse_interval)]
    pub indegree: Option<(f64, f64)>,
    /// Bidirected share interval `lo,hi`.
    #[arg(long, value_parser = parse_interval)]
    pub bidirected_fraction: Option<(f64, f64)>,
}

impl SuiteArgs {
    pub fn sampler(&self) -> Result<(GraphSamplerConfig, Option<(usize, usize)>), CliError> {
        let mut cfg = GraphSamplerConfig::new(self.d.lo, self.seed);
        cfg.topology = self.topology.into();
        if let Some(r) = self.indegree {
            cfg.indegree_range = r;
        }
        if let Some(r) = self.bidirected_fraction {
            cfg.bidirected_fraction_range = r;
        }
        // Checked at both ends of the node range.
        let mut hi = cfg.clone();
        hi.d = self.d.hi;
        cfg.validate().and_then(|_| hi.validate()).map_err(|e| CliError::Config(e.to_string()))?;
        let range = (self.d.lo != self.d.hi).then_some((self.d.lo, self.d.hi));
        Ok((cfg, range))
    }

    pub fn echo(&self, count: usize) -> Result<serde_json::Value, CliError> {
        let (cfg, range) = self.sampler()?;
        Ok(json!({
            "sampler": cfg,
            "d_range": range,
            "n": self.n,
            "count": count,
        }))
    }
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub suite: SuiteArgs,
    /// Number of dataset/graph pairs.
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn entry_name(k: usize) -> String {
    format!("ds{k:03}")
}

/// Writes the suite and returns its manifest.
pub fn write_suite(suite: &SuiteArgs, count: usize, out: &Path) -> Result<Manifest, CliError> {
    let (cfg, range) = suite.sampler()?;
    if suite.n == 0 {
        return Err(CliError::Config("--n must be positive".into()));
    }
    std::fs::create_dir_all(out)?;
    let instances = generate_suite(count, &cfg, range, suite.n)?;
    let mut entries = Vec::with_capacity(count);
    for (k, inst) in instances.iter().enumerate() {
        let name = entry_name(k);
        let data = format!("{name}.csv");
        let graph = format!("{name}.graph.json");
        let params = format!("{name}.params.json");
        inst.data.save(&out.join(&data))?;
        save_graph(&out.join(&graph), &inst.graph)?;
        save_params(&out.join(&params), &inst.params)?;
        entries.push(ManifestEntry {
            name,
            d: inst.graph.d(),
            n: inst.data.n(),
            seed: inst.seed,
            data,
            graph,
            params: Some(params),
        });
    }
    let manifest = Manifest {
        config: suite.echo(count)?,
        entries,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn run(args: SimulateArgs) -> Result<(), CliError> {
    let m = write_suite(&args.suite, args.count, &args.out)?;
    log::info!("wrote {} datasets to {}", m.entries.len(), args.out.display());
    Ok(())
}
