//! Posterior-guided optimization: each inner minimizer result is filtered
//! coordinate by coordinate, keeping a proposed value with a probability
//! that grows with the posterior edge probability and with the outer step.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::abic::{abic_fit_with, AbicConfig, AbicResult, FitOptions, Layout, StepContext, UpdateGuide};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::posterior::SkeletonPosterior;
use crate::rng::keyed_uniform;
use crate::scm::ScmParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuideConfig {
    /// Temperature constant added to every posterior probability.
    pub c: f64,
    /// Always keep proposals on coordinates that are shrinking toward zero.
    pub sparsity_unconditional: bool,
    pub seed: u64,
}

impl Default for GuideConfig {
    fn default() -> Self {
        Self {
            c: 0.1,
            sparsity_unconditional: true,
            seed: 0,
        }
    }
}

impl GuideConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c >= 0.0) {
            return Err(Error::InvalidInput("temperature constant must be non-negative".into()));
        }
        Ok(())
    }
}

/// `min(1, (p + c)^(1 / (t + 1)))` for a 0-based outer step `t`.
pub fn accept_probability(p: f64, t: usize, c: f64) -> f64 {
    let base = p + c;
    if base >= 1.0 {
        return 1.0;
    }
    base.max(0.0).powf(1.0 / (t as f64 + 1.0))
}

/// First outer step from which every acceptance probability exceeds
/// `1 - eps`, given the smallest posterior entry `p_min`.
pub fn steps_to_near_certainty(p_min: f64, c: f64, eps: f64) -> usize {
    let base = p_min + c;
    if base >= 1.0 {
        return 0;
    }
    if base <= 0.0 {
        return usize::MAX;
    }
    // base^(1/(t+1)) > 1 - eps  <=>  t + 1 > ln(base) / ln(1 - eps)
    let bound = base.ln() / (1.0 - eps).ln();
    let t = bound.floor() as usize;
    // Guard against rounding at the boundary.
    (t.saturating_sub(1)..t + 2)
        .find(|&s| accept_probability(p_min, s, c) > 1.0 - eps)
        .unwrap_or(t + 1)
}

const DELTA_KEY: u64 = 0;
const BETA_KEY: u64 = 1;

/// Filters `proposed` in place against `current`. `grads` is the objective
/// gradient at `current` (the `beta` part per symmetric pair). Returns the
/// number of free coordinates that kept their proposed value.
#[allow(clippy::too_many_arguments)]
pub fn posterior_guided_update(
    current: &ScmParams,
    proposed: &mut ScmParams,
    grads: (&DMatrix<f64>, &DMatrix<f64>),
    posterior: &SkeletonPosterior,
    layout: &Layout,
    step: StepContext,
    cfg: &GuideConfig,
) -> usize {
    let (gd, gb) = grads;
    let keys = |i: usize, j: usize, kind: u64| [step.t_outer as u64, step.t_inner as u64, i as u64, j as u64, kind];
    let decide = |value: f64, grad: f64, i: usize, j: usize, kind: u64| -> bool {
        if cfg.sparsity_unconditional && value * grad > 0.0 {
            return true;
        }
        let prob = accept_probability(posterior.get(i, j), step.t_outer, cfg.c);
        keyed_uniform(cfg.seed, &keys(i, j, kind)) < prob
    };
    let mut accepted = 0;
    for &(i, j) in &layout.delta {
        if decide(current.delta[(i, j)], gd[(i, j)], i, j, DELTA_KEY) {
            accepted += 1;
        } else {
            proposed.delta[(i, j)] = current.delta[(i, j)];
        }
    }
    for &(i, j) in &layout.beta {
        if decide(current.beta[(i, j)], gb[(i, j)], i, j, BETA_KEY) {
            accepted += 1;
        } else {
            proposed.beta[(i, j)] = current.beta[(i, j)];
            proposed.beta[(j, i)] = current.beta[(j, i)];
        }
    }
    accepted
}

/// [`UpdateGuide`] driven by a skeleton posterior.
pub struct PosteriorGuide<'a> {
    pub posterior: &'a SkeletonPosterior,
    pub cfg: GuideConfig,
}

impl UpdateGuide for PosteriorGuide<'_> {
    fn wants_gradients(&self) -> bool {
        true
    }

    fn filter(
        &mut self,
        step: StepContext,
        layout: &Layout,
        current: &ScmParams,
        proposed: &mut ScmParams,
        grads: Option<(&DMatrix<f64>, &DMatrix<f64>)>,
    ) -> usize {
        let d = layout.d;
        let zeros = DMatrix::zeros(d, d);
        let grads = grads.unwrap_or((&zeros, &zeros));
        posterior_guided_update(current, proposed, grads, self.posterior, layout, step, &self.cfg)
    }
}

pub fn spot_fit(data: &Dataset, posterior: &SkeletonPosterior, abic_cfg: &AbicConfig, guide_cfg: &GuideConfig) -> Result<AbicResult> {
    spot_fit_with(data, posterior, abic_cfg, guide_cfg, FitOptions::default())
}

/// As [`spot_fit`] with extra fit options; any guide in `opts` is replaced.
pub fn spot_fit_with(
    data: &Dataset,
    posterior: &SkeletonPosterior,
    abic_cfg: &AbicConfig,
    guide_cfg: &GuideConfig,
    opts: FitOptions<'_>,
) -> Result<AbicResult> {
    guide_cfg.validate()?;
    if posterior.d() != data.d() {
        return Err(Error::DimensionMismatch {
            expected: data.d(),
            got: posterior.d(),
        });
    }
    let mut guide = PosteriorGuide {
        posterior,
        cfg: guide_cfg.clone(),
    };
    abic_fit_with(data, abic_cfg, FitOptions { guide: Some(&mut guide), ..opts })
}

#[cfg(test)]
mod tests;
