//! Per-pair features from Fisher-z tests over small conditioning sets drawn
//! from candidate neighborhoods.

use itertools::Itertools;
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::ci::CovarianceCache;
use crate::data::Dataset;
use crate::error::{Error, Result};

/// Bumped whenever the feature layout changes.
pub const FEATURE_SCHEMA_VERSION: u32 = 1;

/// Largest conditioning set tried per pair.
pub const MAX_COND: usize = 3;
/// Candidate neighbors kept per node.
pub const NEIGHBORS: usize = 5;
/// p-value recorded when a column is constant and no test can run.
pub const SENTINEL_P: f64 = 1.0;

const BASE_LEN: usize = 19;
const PRIOR_LEN: usize = 3;

/// Number of features for a stage with or without prior scores.
pub fn feature_len(has_prior: bool) -> usize {
    if has_prior {
        BASE_LEN + PRIOR_LEN
    } else {
        BASE_LEN
    }
}

/// Candidate neighborhoods and the previous stage's scores.
#[derive(Clone, Debug, Default)]
pub struct FeatureContext {
    /// Symmetric pair probabilities from the previous stage.
    pub prior: Option<DMatrix<f64>>,
    /// Pairs scoring below this are left out of candidate neighborhoods.
    pub prune_threshold: f64,
}

/// Features of the unordered pair `(i, j)`, `i < j`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairFeatures {
    pub i: usize,
    pub j: usize,
    pub values: Vec<f64>,
    /// Some column had zero variance; its tests fell back to sentinels.
    pub degenerate: bool,
}

/// Orders nodes by a score, breaking ties by a second score and then by
/// index. Ties are measure-zero on continuous data.
fn top_candidates(d: usize, i: usize, score: impl Fn(usize) -> (f64, f64), allowed: impl Fn(usize) -> bool) -> Vec<usize> {
    let mut others: Vec<usize> = (0..d).filter(|&k| k != i && allowed(k)).collect();
    others.sort_by(|&a, &b| {
        let (sa, sb) = (score(a), score(b));
        sb.0.total_cmp(&sa.0).then(sb.1.total_cmp(&sa.1)).then(a.cmp(&b))
    });
    others.truncate(NEIGHBORS);
    others
}

struct Summary {
    min: f64,
    max: f64,
    mean: f64,
}

fn summarize(values: &mut [f64]) -> Summary {
    // Sorting first makes the sum independent of enumeration order.
    values.sort_by(f64::total_cmp);
    Summary {
        min: values[0],
        max: values[values.len() - 1],
        mean: values.iter().sum::<f64>() / values.len() as f64,
    }
}

/// Features for every unordered pair, in row-major `i < j` order.
pub fn extract_pair_features(data: &Dataset, ctx: &FeatureContext) -> Result<Vec<PairFeatures>> {
    let d = data.d();
    let n = data.n();
    if n <= MAX_COND + 3 {
        return Err(Error::TooFewSamples { n, required: MAX_COND + 3 });
    }
    if let Some(p) = &ctx.prior {
        if p.nrows() != d {
            return Err(Error::DimensionMismatch { expected: d, got: p.nrows() });
        }
    }
    let cache = CovarianceCache::new(data);
    let cov = cache.covariance();
    let constant: Vec<bool> = (0..d).map(|k| !(cov[(k, k)] > 0.0)).collect();
    let corr = DMatrix::from_fn(d, d, |a, b| {
        if constant[a] || constant[b] {
            0.0
        } else if a == b {
            1.0
        } else {
            (cov[(a, b)] / (cov[(a, a)] * cov[(b, b)]).sqrt()).clamp(-1.0, 1.0)
        }
    });

    let usable = |k: usize| !constant[k];
    let candidates: Vec<Vec<usize>> = (0..d)
        .map(|i| match &ctx.prior {
            None => top_candidates(d, i, |k| (corr[(i, k)].abs(), 0.0), usable),
            Some(p) => top_candidates(d, i, |k| (p[(i, k)], corr[(i, k)].abs()), |k| usable(k) && p[(i, k)] >= ctx.prune_threshold),
        })
        .collect();
    // Rank of each node in the other's |corr| ordering (0 = strongest).
    let corr_rank = |i: usize, j: usize| -> f64 {
        let cij = corr[(i, j)].abs();
        (0..d).filter(|&k| k != i && k != j && corr[(i, k)].abs() > cij).count() as f64
    };
    let expected_degree: Option<Vec<f64>> = ctx.prior.as_ref().map(|p| {
        (0..d)
            .map(|i| {
                let mut row: Vec<f64> = p.row(i).iter().copied().collect();
                row.sort_by(f64::total_cmp);
                row.iter().sum()
            })
            .collect()
    });

    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| ((i + 1)..d).map(move |j| (i, j))).collect();
    let out = pairs
        .par_iter()
        .map(|&(i, j)| {
            let degenerate = constant[i] || constant[j];
            let mut values = Vec::with_capacity(feature_len(ctx.prior.is_some()));
            let r0 = corr[(i, j)].abs();
            let test_p = |z: &[usize]| -> Option<(f64, f64)> {
                if degenerate || z.iter().any(|&k| constant[k]) {
                    return None;
                }
                cache.test(i, j, z).ok().map(|r| (r.p_value, r.partial_correlation.abs()))
            };
            let p0 = test_p(&[]).map_or(SENTINEL_P, |t| t.0);
            values.push(r0);
            values.push(p0);

            let pool: Vec<usize> = candidates[i]
                .iter()
                .chain(&candidates[j])
                .copied()
                .filter(|&k| k != i && k != j)
                .sorted()
                .dedup()
                .collect();
            let mut all_max = p0;
            let mut min_abs_r = if degenerate { 0.0 } else { r0 };
            let mut last = [p0; 3];
            for size in 1..=MAX_COND {
                let mut ps = Vec::new();
                for z in pool.iter().copied().combinations(size) {
                    if let Some((p, r)) = test_p(&z) {
                        ps.push(p);
                        min_abs_r = min_abs_r.min(r);
                    }
                }
                // Too few candidates for this size: repeat the smaller size.
                if !ps.is_empty() {
                    let s = summarize(&mut ps);
                    all_max = all_max.max(s.max);
                    last = [s.min, s.max, s.mean];
                }
                values.extend(last);
            }
            values.push(all_max);
            values.push(min_abs_r);
            let full = if pool.len() + 3 < n { test_p(&pool) } else { None };
            values.push(full.map_or(0.0, |t| t.1));
            values.push(full.map_or(SENTINEL_P, |t| t.0));

            let overlap = candidates[i].iter().filter(|k| candidates[j].contains(k)).count();
            let mutual = candidates[i].contains(&j) as usize + candidates[j].contains(&i) as usize;
            let (ri, rj) = (corr_rank(i, j), corr_rank(j, i));
            values.push(overlap as f64);
            values.push(mutual as f64);
            values.push(ri.min(rj));
            values.push(ri.max(rj));

            if let (Some(p), Some(deg)) = (&ctx.prior, &expected_degree) {
                let (di, dj) = (deg[i] - p[(i, j)], deg[j] - p[(i, j)]);
                values.push(p[(i, j)]);
                values.push(di.min(dj));
                values.push(di.max(dj));
            }
            debug_assert_eq!(values.len(), feature_len(ctx.prior.is_some()));
            PairFeatures { i, j, values, degenerate }
        })
        .collect();
    Ok(out)
}
