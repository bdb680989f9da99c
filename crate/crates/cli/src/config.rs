//! Config files (TOML or JSON) and small argument parsers.
//!
//! Keys mirror the library config structs, one table per component:
//!
//! ```toml
//! [abic]      # lambda, omega, omega_delta, omega_beta, alm_steps, inner_steps,
//!             # rho0, rho_growth, rho_max, alpha0, inner_tol, inner_max_iter,
//!             # h_tol, standardize, seed
//! [fci]       # alpha, max_cond_size, use_possible_dsep
//! [guide]     # c, sparsity_unconditional, seed
//! [cascade]   # stages, prune_threshold, label_smoothing, calibration_fraction,
//!             # recall_beta, seed, [cascade.gbdt]
//! [bootstrap] # replicas, subsample_fraction, regenerate_n, ricf_tol,
//!             # ricf_max_iter, seed, [bootstrap.fci]
//! [adapt]     # label_smoothing, validation_fraction, seed, [adapt.gbdt]
//! ```
//!
//! Missing keys take library defaults; command-line flags override both.

use std::path::Path;

use causal_mag::abic::AbicConfig;
use causal_mag::fci::FciConfig;
use causal_mag::posterior::{AdaptConfig, BootstrapConfig, CascadeConfig};
use causal_mag::spot::GuideConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub abic: AbicConfig,
    pub fci: FciConfig,
    pub guide: GuideConfig,
    pub cascade: CascadeConfig,
    pub bootstrap: BootstrapConfig,
    pub adapt: AdaptConfig,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
        }
    }
}

/// Inclusive node-count range: `30` or `20..50`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct NodeRange {
    pub lo: usize,
    pub hi: usize,
}

impl std::str::FromStr for NodeRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parse = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("bad node count {t:?}"));
        let (lo, hi) = match s.split_once("..") {
            Some((a, b)) => (parse(a)?, parse(b.trim_start_matches('='))?),
            None => {
                let v = parse(s)?;
                (v, v)
            }
        };
        if lo < 2 || lo > hi {
            return Err(format!("node range {s:?} must satisfy 2 <= lo <= hi"));
        }
        Ok(Self { lo, hi })
    }
}

/// `lo,hi` pair of reals.
pub fn parse_interval(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected lo,hi but got {s:?}"))?;
    let lo: f64 = a.trim().parse().map_err(|_| format!("bad number {a:?}"))?;
    let hi: f64 = b.trim().parse().map_err(|_| format!("bad number {b:?}"))?;
    if !(lo <= hi) {
        return Err(format!("interval {s:?} has lo > hi"));
    }
    Ok((lo, hi))
}
