//! Dataset-specific corpora by bootstrap, refit and regeneration, plus
//! adaptation of a trained cascade to such a corpus.

use std::path::Path;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cascade::{CascadeModel, CascadeOutput};
use super::features::{PairFeatures, FEATURE_SCHEMA_VERSION};
use super::gbdt::{log_loss, Booster, GbdtConfig};
use super::SkeletonPosterior;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fci::{fci_learn, fci_skeleton_with_pvalues, FciConfig};
use crate::graph::{skeleton_of, Admg, Skeleton};
use crate::ricf::ricf_fit;
use crate::rng;
use crate::scm::{sample_dataset, ScmParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    pub replicas: usize,
    pub subsample_fraction: f64,
    pub fci: FciConfig,
    /// Rows per regenerated dataset; the input size when absent.
    pub regenerate_n: Option<usize>,
    pub ricf_tol: f64,
    pub ricf_max_iter: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicas: 20,
            subsample_fraction: 0.5,
            fci: FciConfig::default(),
            regenerate_n: None,
            ricf_tol: 1e-6,
            ricf_max_iter: 100,
            seed: 0,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicas == 0 {
            return Err(Error::InvalidInput("at least one bootstrap replica is required".into()));
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return Err(Error::InvalidInput("subsample fraction must lie in (0, 1]".into()));
        }
        self.fci.validate()
    }
}

fn subsample(data: &Dataset, fraction: f64, rng: &mut rng::Rng) -> Result<Dataset> {
    let n = data.n();
    let m = ((n as f64 * fraction).round() as usize).clamp(1, n);
    let mut rows = index::sample(rng, n, m).into_vec();
    rows.sort_unstable();
    data.select_rows(&rows)
}

/// One bootstrap replica: the MAG learned on a row subsample, its
/// parameters fitted on the full data, and a dataset sampled from them.
#[derive(Clone, Debug)]
pub struct Replica {
    pub mag: Admg,
    pub params: ScmParams,
    pub data: Dataset,
}

/// Replica `r` under `cfg`; `None` when the refit or resampling fails.
pub fn bootstrap_replica(data: &Dataset, cfg: &BootstrapConfig, r: usize) -> Result<Option<Replica>> {
    let mut rng = rng::stream(cfg.seed, r as u64);
    let sub = subsample(data, cfg.subsample_fraction, &mut rng)?;
    let mag = fci_learn(&sub, &cfg.fci)?;
    let fit = match ricf_fit(data, &mag, cfg.ricf_tol, cfg.ricf_max_iter) {
        Ok(f) => f,
        Err(e) => {
            log::warn!("bootstrap replica {r} skipped: {e}");
            return Ok(None);
        }
    };
    match sample_dataset(&fit.params, cfg.regenerate_n.unwrap_or(data.n()), &mut rng) {
        Ok(ds) => Ok(Some(Replica {
            mag,
            params: fit.params,
            data: ds,
        })),
        Err(e) => {
            log::warn!("bootstrap replica {r} skipped: {e}");
            Ok(None)
        }
    }
}

/// Regenerated datasets paired with the skeletons of the MAGs they were
/// sampled from. Failed replicas are skipped.
pub fn bootstrap_dynamic_corpus(data: &Dataset, cfg: &BootstrapConfig) -> Result<Vec<(Dataset, Skeleton)>> {
    cfg.validate()?;
    let replicas: Vec<Option<Replica>> = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| bootstrap_replica(data, cfg, r))
        .collect::<Result<_>>()?;
    Ok(replicas
        .into_iter()
        .flatten()
        .map(|rep| {
            let s = skeleton_of(&rep.mag);
            (rep.data, s)
        })
        .collect())
}

/// Adjacency frequency of the FCI skeleton over row subsamples.
pub fn bootstrap_fci_posterior(data: &Dataset, cfg: &BootstrapConfig) -> Result<SkeletonPosterior> {
    cfg.validate()?;
    let d = data.d();
    let skeletons: Vec<Skeleton> = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(cfg.seed, r as u64);
            let sub = subsample(data, cfg.subsample_fraction, &mut rng)?;
            Ok(fci_skeleton_with_pvalues(&sub, &cfg.fci)?.0)
        })
        .collect::<Result<_>>()?;
    let total = skeletons.len() as f64;
    Ok(SkeletonPosterior::from_pairs(d, |i, j| skeletons.iter().filter(|s| s.adjacent(i, j)).count() as f64 / total))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptConfig {
    pub gbdt: GbdtConfig,
    /// Off by default: the starting margin is already calibrated, and
    /// smoothed targets pull confident pairs away from 0 and 1.
    pub label_smoothing: f64,
    /// Share of corpus datasets used to choose how many rounds to keep.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            gbdt: GbdtConfig {
                n_trees: 40,
                max_depth: 3,
                learning_rate: 0.05,
                min_leaf: 20,
                l2: 5.0,
                n_bins: 32,
            },
            label_smoothing: 0.0,
            validation_fraction: 0.25,
            seed: 0,
        }
    }
}

/// A static cascade plus a booster that corrects its final logit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptedModel {
    pub schema_version: u32,
    pub static_model: CascadeModel,
    pub booster: Booster,
}

fn adapted_row(f: &PairFeatures, out: &CascadeOutput) -> Vec<f64> {
    let mut row = f.values.clone();
    for s in &out.stage_scores {
        row.push(s[(f.i, f.j)]);
    }
    row.push(out.final_margin[(f.i, f.j)]);
    row
}

/// Calibrated static logit used as the starting margin.
fn static_margin(out: &CascadeOutput, i: usize, j: usize) -> f64 {
    super::gbdt::logit(out.stage_scores.last().expect("at least one stage")[(i, j)])
}

/// Trains a correction on the dynamic corpus on top of the static model's
/// output, keeping the number of rounds that minimizes held-out loss (zero
/// rounds reproduces the static model).
pub fn adapt_model(static_model: &CascadeModel, corpus: &[(Dataset, Skeleton)], cfg: &AdaptConfig) -> Result<AdaptedModel> {
    if corpus.is_empty() {
        return Err(Error::InvalidInput("dynamic corpus is empty".into()));
    }
    let outputs: Vec<CascadeOutput> = corpus.par_iter().map(|(d, _)| static_model.evaluate(d)).collect::<Result<_>>()?;
    let n_val = if corpus.len() >= 2 {
        ((corpus.len() as f64 * cfg.validation_fraction).round() as usize).clamp(1, corpus.len() - 1)
    } else {
        0
    };
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng::seeded(cfg.seed));
    let (val, train) = order.split_at(n_val);

    let collect = |ids: &[usize]| {
        let mut x = Vec::new();
        let mut base = Vec::new();
        let mut y = Vec::new();
        for &k in ids {
            let truth = &corpus[k].1;
            for f in &outputs[k].base_features {
                x.push(adapted_row(f, &outputs[k]));
                base.push(static_margin(&outputs[k], f.i, f.j));
                let label = truth.adjacent(f.i, f.j);
                y.push(if label { 1.0 - cfg.label_smoothing / 2.0 } else { cfg.label_smoothing / 2.0 });
            }
        }
        (x, base, y)
    };
    let (x, base, y) = collect(train);
    let mut booster = Booster::fit(&x, &y, Some(&base), &cfg.gbdt)?;
    if !val.is_empty() {
        let (xv, bv, yv) = collect(val);
        let mut best = (log_loss(&bv, &yv), 0usize);
        let mut margins = bv.clone();
        for (t, tree) in booster.trees.iter().enumerate() {
            for (m, row) in margins.iter_mut().zip(&xv) {
                *m += tree.predict(row);
            }
            let l = log_loss(&margins, &yv);
            if l < best.0 {
                best = (l, t + 1);
            }
        }
        booster.truncate(best.1);
    }
    Ok(AdaptedModel {
        schema_version: FEATURE_SCHEMA_VERSION,
        static_model: static_model.clone(),
        booster,
    })
}

impl AdaptedModel {
    pub fn infer(&self, data: &Dataset) -> Result<SkeletonPosterior> {
        let out = self.static_model.evaluate(data)?;
        let d = data.d();
        let mut p = nalgebra::DMatrix::zeros(d, d);
        for f in &out.base_features {
            let m = self.booster.margin(&adapted_row(f, &out), Some(static_margin(&out, f.i, f.j)));
            let v = super::gbdt::sigmoid(m);
            p[(f.i, f.j)] = v;
            p[(f.j, f.i)] = v;
        }
        SkeletonPosterior::from_matrix(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }
}
