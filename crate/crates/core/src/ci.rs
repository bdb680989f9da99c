//! Fisher-z conditional independence tests on Gaussian data.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::data::Dataset;
use crate::error::{Error, Result};

const R_CLAMP: f64 = 1.0 - 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CiResult {
    pub statistic: f64,
    pub p_value: f64,
    pub partial_correlation: f64,
    pub conditioning_size: usize,
}

/// Sample covariance plus a permutation-invariant ordering key per column.
///
/// Conditioning sets are factored in key order, so the arithmetic for a
/// test does not depend on how the columns happen to be numbered.
#[derive(Clone, Debug)]
pub struct CovarianceCache {
    cov: DMatrix<f64>,
    n: usize,
    key: Vec<(f64, f64)>,
}

impl CovarianceCache {
    pub fn new(data: &Dataset) -> Self {
        Self::from_covariance(data.covariance(), data.n())
    }

    pub fn from_covariance(cov: DMatrix<f64>, n: usize) -> Self {
        let d = cov.nrows();
        let key = (0..d)
            .map(|k| {
                let mut col: Vec<f64> = cov.column(k).iter().map(|v| v * v).collect();
                col.sort_by(f64::total_cmp);
                (cov[(k, k)], col.iter().sum())
            })
            .collect();
        Self { cov, n, key }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.cov.nrows()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Partial correlation of `i` and `j` given `z`.
    pub fn partial_correlation(&self, i: usize, j: usize, z: &[usize]) -> Result<f64> {
        let s = &self.cov;
        if z.is_empty() {
            return correlation(s[(i, j)], s[(i, i)], s[(j, j)]);
        }
        let mut zs = z.to_vec();
        zs.sort_by(|&a, &b| {
            let (ka, kb) = (self.key[a], self.key[b]);
            ka.0.total_cmp(&kb.0).then(ka.1.total_cmp(&kb.1)).then(a.cmp(&b))
        });
        let m = zs.len();
        // Lower Cholesky factor of S_zz.
        let mut l = vec![0.0; m * m];
        for r in 0..m {
            for c in 0..=r {
                let mut v = s[(zs[r], zs[c])];
                for k in 0..c {
                    v -= l[r * m + k] * l[c * m + k];
                }
                if r == c {
                    if v <= 1e-12 * s[(zs[r], zs[r])].max(f64::MIN_POSITIVE) {
                        return Err(Error::Singular(format!("conditioning covariance for {zs:?}")));
                    }
                    l[r * m + r] = v.sqrt();
                } else {
                    l[r * m + c] = v / l[c * m + c];
                }
            }
        }
        let whiten = |a: usize| -> Vec<f64> {
            let mut u = vec![0.0; m];
            for r in 0..m {
                let mut v = s[(zs[r], a)];
                for k in 0..r {
                    v -= l[r * m + k] * u[k];
                }
                u[r] = v / l[r * m + r];
            }
            u
        };
        let (ui, uj) = (whiten(i), whiten(j));
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let cij = s[(i, j)] - dot(&ui, &uj);
        let cii = s[(i, i)] - dot(&ui, &ui);
        let cjj = s[(j, j)] - dot(&uj, &uj);
        correlation(cij, cii, cjj)
    }

    pub fn test(&self, i: usize, j: usize, z: &[usize]) -> Result<CiResult> {
        let required = z.len() + 4;
        if self.n < required {
            return Err(Error::TooFewSamples { n: self.n, required });
        }
        let r = self.partial_correlation(i, j, z)?;
        Ok(fisher_z_from_r(r, self.n, z.len()))
    }
}

fn correlation(cij: f64, cii: f64, cjj: f64) -> Result<f64> {
    if !(cii > 0.0 && cjj > 0.0) {
        // A degenerate column carries no evidence of dependence.
        return Ok(0.0);
    }
    let r = cij / (cii * cjj).sqrt();
    if !r.is_finite() {
        return Err(Error::NonFinite("partial correlation".into()));
    }
    Ok(r.clamp(-R_CLAMP, R_CLAMP))
}

/// Fisher-z statistic and two-sided normal p-value for a partial
/// correlation `r` estimated from `n` samples with `k` conditioning variables.
pub fn fisher_z_from_r(r: f64, n: usize, k: usize) -> CiResult {
    let r = r.clamp(-R_CLAMP, R_CLAMP);
    let statistic = ((n - k - 3) as f64).sqrt() * r.atanh().abs();
    let p_value = erfc(statistic / std::f64::consts::SQRT_2).clamp(0.0, 1.0);
    CiResult {
        statistic,
        p_value,
        partial_correlation: r,
        conditioning_size: k,
    }
}

/// One-off test straight from a dataset. Repeated tests should share a
/// [`CovarianceCache`].
pub fn fisher_z(data: &Dataset, i: usize, j: usize, z: &[usize]) -> Result<CiResult> {
    let d = data.d();
    if i == j || i >= d || j >= d || z.iter().any(|&k| k >= d || k == i || k == j) {
        return Err(Error::InvalidInput(format!("invalid test ({i}, {j} | {z:?}) for {d} columns")));
    }
    CovarianceCache::new(data).test(i, j, z)
}
