//! Cascade of boosted pair classifiers. Each stage sees the previous
//! stage's scores and candidate neighborhoods; pairs scoring below the
//! pruning threshold keep their last score.

use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{extract_pair_features, feature_len, FeatureContext, PairFeatures, FEATURE_SCHEMA_VERSION};
use super::gbdt::{logit, Booster, GbdtConfig, Platt};
use super::SkeletonPosterior;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::Skeleton;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CascadeConfig {
    pub stages: usize,
    pub prune_threshold: f64,
    pub label_smoothing: f64,
    /// Share of corpus datasets held out to fit calibration maps.
    pub calibration_fraction: f64,
    /// Weight of recall in the F-beta score used to pick the decision
    /// threshold.
    pub recall_beta: f64,
    pub gbdt: GbdtConfig,
    pub seed: u64,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self {
            stages: 3,
            prune_threshold: 0.01,
            label_smoothing: 0.05,
            calibration_fraction: 0.2,
            recall_beta: 3.0,
            gbdt: GbdtConfig::default(),
            seed: 0,
        }
    }
}

impl CascadeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stages == 0 {
            return Err(Error::InvalidInput("cascade needs at least one stage".into()));
        }
        if !(0.0..1.0).contains(&self.prune_threshold) || !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::InvalidInput("prune threshold and label smoothing must lie in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.calibration_fraction) || !(self.recall_beta > 0.0) {
            return Err(Error::InvalidInput("invalid calibration settings".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub booster: Booster,
    pub calibration: Platt,
    /// Training rows were all one class; the stage predicts a constant.
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub corpus_size: usize,
    pub train_datasets: Vec<usize>,
    pub calibration_datasets: Vec<usize>,
    pub stage_rows: Vec<usize>,
    pub label_smoothing: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeModel {
    pub schema_version: u32,
    pub stages: Vec<Stage>,
    pub prune_threshold: f64,
    /// Probability above which a pair is declared adjacent.
    pub decision_threshold: f64,
    pub metadata: TrainingMetadata,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub stage_rows: Vec<usize>,
    pub stage_positives: Vec<usize>,
    pub final_train_loss: Vec<f64>,
    pub decision_threshold: f64,
    pub calibration_recall: f64,
    pub calibration_precision: f64,
}

/// Scores of every stage for one dataset.
#[derive(Clone, Debug)]
pub struct CascadeOutput {
    /// Calibrated pair probabilities after each stage (symmetric).
    pub stage_scores: Vec<DMatrix<f64>>,
    /// Pre-calibration margin of the last stage that scored each pair.
    pub final_margin: DMatrix<f64>,
    /// First-stage features, row-major `i < j`.
    pub base_features: Vec<PairFeatures>,
}

impl CascadeOutput {
    pub fn posterior(&self) -> SkeletonPosterior {
        let last = self.stage_scores.last().expect("at least one stage");
        SkeletonPosterior::from_pairs(last.nrows(), |i, j| last[(i, j)])
    }
}

fn smoothed(label: bool, eps: f64) -> f64 {
    if label {
        1.0 - eps / 2.0
    } else {
        eps / 2.0
    }
}

struct Prepared {
    features: Vec<PairFeatures>,
    active: Vec<bool>,
}

/// Runs stages `0..stages.len()` of a (possibly partial) cascade.
fn run_stages(stages: &[Stage], prune: f64, data: &Dataset) -> Result<CascadeOutput> {
    let d = data.d();
    let mut prior: Option<DMatrix<f64>> = None;
    let mut out = CascadeOutput {
        stage_scores: Vec::with_capacity(stages.len()),
        final_margin: DMatrix::zeros(d, d),
        base_features: Vec::new(),
    };
    for (s, stage) in stages.iter().enumerate() {
        let ctx = FeatureContext {
            prior: prior.clone(),
            prune_threshold: prune,
        };
        let feats = extract_pair_features(data, &ctx)?;
        let mut scores = DMatrix::zeros(d, d);
        for f in &feats {
            let active = prior.as_ref().map_or(true, |p| p[(f.i, f.j)] >= prune);
            let v = if active {
                let m = stage.booster.margin(&f.values, None);
                out.final_margin[(f.i, f.j)] = m;
                out.final_margin[(f.j, f.i)] = m;
                stage.calibration.apply(m)
            } else {
                prior.as_ref().map_or(0.0, |p| p[(f.i, f.j)])
            };
            scores[(f.i, f.j)] = v;
            scores[(f.j, f.i)] = v;
        }
        if s == 0 {
            out.base_features = feats;
        }
        prior = Some(scores.clone());
        out.stage_scores.push(scores);
    }
    Ok(out)
}

fn prepare(stages: &[Stage], prune: f64, data: &Dataset) -> Result<Prepared> {
    let prior = if stages.is_empty() {
        None
    } else {
        Some(run_stages(stages, prune, data)?.stage_scores.pop().expect("non-empty"))
    };
    let ctx = FeatureContext {
        prior: prior.clone(),
        prune_threshold: prune,
    };
    let features = extract_pair_features(data, &ctx)?;
    let active = features.iter().map(|f| prior.as_ref().map_or(true, |p| p[(f.i, f.j)] >= prune)).collect();
    Ok(Prepared { features, active })
}

/// Threshold maximizing F-beta among those where recall is at least
/// precision.
fn recall_favoring_threshold(scores: &[f64], labels: &[bool], beta: f64) -> (f64, f64, f64) {
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 {
        return (0.5, 0.0, 0.0);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let b2 = beta * beta;
    let (mut tp, mut best) = (0usize, (f64::NEG_INFINITY, 0.5, 0.0, 0.0));
    for (k, &o) in order.iter().enumerate() {
        if labels[o] {
            tp += 1;
        }
        if k + 1 < order.len() && scores[order[k + 1]] == scores[o] {
            continue;
        }
        let precision = tp as f64 / (k + 1) as f64;
        let recall = tp as f64 / pos as f64;
        let f = if tp == 0 { 0.0 } else { (1.0 + b2) * precision * recall / (b2 * precision + recall) };
        if recall >= precision && f > best.0 {
            best = (f, scores[o], recall, precision);
        }
    }
    (best.1, best.2, best.3)
}

pub fn train_cascade(corpus: &[(Dataset, Skeleton)], cfg: &CascadeConfig) -> Result<(CascadeModel, TrainReport)> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::InvalidInput("training corpus is empty".into()));
    }
    for (data, s) in corpus {
        if data.d() != s.d() {
            return Err(Error::DimensionMismatch { expected: data.d(), got: s.d() });
        }
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut rng::seeded(cfg.seed));
    let n_cal = if corpus.len() >= 2 {
        ((corpus.len() as f64 * cfg.calibration_fraction).round() as usize).clamp(1, corpus.len() - 1)
    } else {
        0
    };
    let mut calibration_datasets: Vec<usize> = order[..n_cal].to_vec();
    let mut train_datasets: Vec<usize> = order[n_cal..].to_vec();
    calibration_datasets.sort_unstable();
    train_datasets.sort_unstable();

    let mut stages: Vec<Stage> = Vec::with_capacity(cfg.stages);
    let mut report = TrainReport {
        stage_rows: Vec::new(),
        stage_positives: Vec::new(),
        final_train_loss: Vec::new(),
        decision_threshold: 0.5,
        calibration_recall: 0.0,
        calibration_precision: 0.0,
    };
    for s in 0..cfg.stages {
        let prepared: Vec<Prepared> = corpus
            .par_iter()
            .map(|(data, _)| prepare(&stages, cfg.prune_threshold, data))
            .collect::<Result<_>>()?;
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut positives = 0;
        for &k in &train_datasets {
            let truth = &corpus[k].1;
            for (f, &active) in prepared[k].features.iter().zip(&prepared[k].active) {
                if active {
                    let label = truth.adjacent(f.i, f.j);
                    positives += label as usize;
                    x.push(f.values.clone());
                    y.push(smoothed(label, cfg.label_smoothing));
                }
            }
        }
        report.stage_rows.push(x.len());
        report.stage_positives.push(positives);
        let degenerate = positives == 0 || positives == x.len();
        if degenerate {
            log::warn!("cascade stage {s} has single-class training rows; it predicts a constant");
        }
        let booster = if x.is_empty() {
            Booster {
                n_features: feature_len(s > 0),
                base_margin: logit(cfg.label_smoothing / 2.0),
                trees: Vec::new(),
                train_loss: Vec::new(),
            }
        } else {
            Booster::fit(&x, &y, None, &cfg.gbdt)?
        };
        report.final_train_loss.push(booster.train_loss.last().copied().unwrap_or(f64::NAN));

        let mut margins = Vec::new();
        let mut labels = Vec::new();
        for &k in &calibration_datasets {
            let truth = &corpus[k].1;
            for (f, &active) in prepared[k].features.iter().zip(&prepared[k].active) {
                if active {
                    margins.push(booster.margin(&f.values, None));
                    labels.push(truth.adjacent(f.i, f.j));
                }
            }
        }
        let calibration = if degenerate { Platt::default() } else { Platt::fit(&margins, &labels) };
        stages.push(Stage {
            booster,
            calibration,
            degenerate,
        });
    }

    let mut scores = Vec::new();
    let mut labels = Vec::new();
    let held_out = if calibration_datasets.is_empty() { &train_datasets } else { &calibration_datasets };
    let outputs: Vec<CascadeOutput> = held_out
        .par_iter()
        .map(|&k| run_stages(&stages, cfg.prune_threshold, &corpus[k].0))
        .collect::<Result<_>>()?;
    for (out, &k) in outputs.iter().zip(held_out) {
        let post = out.posterior();
        let truth = &corpus[k].1;
        for i in 0..truth.d() {
            for j in (i + 1)..truth.d() {
                scores.push(post.get(i, j));
                labels.push(truth.adjacent(i, j));
            }
        }
    }
    let (threshold, recall, precision) = recall_favoring_threshold(&scores, &labels, cfg.recall_beta);
    report.decision_threshold = threshold;
    report.calibration_recall = recall;
    report.calibration_precision = precision;

    let model = CascadeModel {
        schema_version: FEATURE_SCHEMA_VERSION,
        stages,
        prune_threshold: cfg.prune_threshold,
        decision_threshold: threshold,
        metadata: TrainingMetadata {
            seed: cfg.seed,
            corpus_size: corpus.len(),
            train_datasets,
            calibration_datasets,
            stage_rows: report.stage_rows.clone(),
            label_smoothing: cfg.label_smoothing,
        },
    };
    Ok((model, report))
}

impl CascadeModel {
    fn check_schema(&self) -> Result<()> {
        if self.schema_version != FEATURE_SCHEMA_VERSION {
            return Err(Error::SchemaMismatch {
                model: self.schema_version,
                extractor: FEATURE_SCHEMA_VERSION,
            });
        }
        Ok(())
    }

    pub fn evaluate(&self, data: &Dataset) -> Result<CascadeOutput> {
        self.check_schema()?;
        run_stages(&self.stages, self.prune_threshold, data)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Parses a stored model, checking the schema version before anything
    /// else.
    pub fn from_json(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            schema_version: u32,
        }
        let header: Header = serde_json::from_str(s)?;
        if header.schema_version != FEATURE_SCHEMA_VERSION {
            return Err(Error::SchemaMismatch {
                model: header.schema_version,
                extractor: FEATURE_SCHEMA_VERSION,
            });
        }
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

pub fn infer_posterior(model: &CascadeModel, data: &Dataset) -> Result<SkeletonPosterior> {
    Ok(model.evaluate(data)?.posterior())
}

#[cfg(test)]
mod tests;
