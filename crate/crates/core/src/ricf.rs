//! Gaussian likelihood of linear SCMs with correlated errors and maximum
//! likelihood fitting for a fixed bow-free graph by residual iterative
//! conditional fitting.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::Admg;
use crate::scm::{implied_covariance, ScmParams};

const JITTER: f64 = 1e-8;

/// Log-likelihood of `n` samples with MLE covariance `sample_cov` under
/// `N(0, Sigma(p))`.
pub fn gaussian_loglik(p: &ScmParams, sample_cov: &DMatrix<f64>, n: usize) -> Result<f64> {
    let sigma = implied_covariance(p)?;
    loglik_from_sigma(&sigma, sample_cov, n)
}

pub(crate) fn loglik_from_sigma(sigma: &DMatrix<f64>, s: &DMatrix<f64>, n: usize) -> Result<f64> {
    let d = sigma.nrows();
    if s.nrows() != d {
        return Err(Error::DimensionMismatch { expected: d, got: s.nrows() });
    }
    let chol = Cholesky::new(sigma.clone()).ok_or_else(|| Error::NotPositiveDefinite("implied covariance".into()))?;
    let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let trace = chol.solve(s).trace();
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    Ok(-0.5 * n as f64 * (d as f64 * ln2pi + logdet + trace))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RicfFit {
    pub params: ScmParams,
    pub converged: bool,
    pub iterations: usize,
    /// Log-likelihood after initialization and after each sweep.
    pub loglik_trace: Vec<f64>,
}

pub fn ricf_fit(data: &Dataset, g: &Admg, tol: f64, max_iter: usize) -> Result<RicfFit> {
    ricf_fit_cov(&data.covariance(), data.n(), g, tol, max_iter)
}

/// Same as [`ricf_fit`] from a sample covariance.
pub fn ricf_fit_cov(s: &DMatrix<f64>, n: usize, g: &Admg, tol: f64, max_iter: usize) -> Result<RicfFit> {
    let d = g.d();
    if s.nrows() != d || s.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, got: s.nrows() });
    }
    if !g.is_bow_free() || !g.is_directed_acyclic() {
        return Err(Error::InvalidInput("fitting needs an acyclic bow-free graph".into()));
    }
    let mut p = ScmParams::zeros(d);
    for i in 0..d {
        p.beta[(i, i)] = s[(i, i)];
    }
    let mut trace = vec![gaussian_loglik(&p, s, n)?];
    let parents: Vec<Vec<usize>> = (0..d).map(|i| g.parents(i)).collect();
    let spouses: Vec<Vec<usize>> = (0..d).map(|i| g.spouses(i)).collect();
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        let before = p.clone();
        for i in 0..d {
            update_node(s, &mut p, i, &parents[i], &spouses[i])?;
        }
        ensure_positive_definite(&mut p.beta);
        trace.push(gaussian_loglik(&p, s, n)?);
        let change = (&p.delta - &before.delta)
            .abs()
            .max()
            .max((&p.beta - &before.beta).abs().max());
        if change < tol {
            converged = true;
            break;
        }
    }
    Ok(RicfFit {
        params: p,
        converged,
        iterations,
        loglik_trace: trace,
    })
}

fn ensure_positive_definite(beta: &mut DMatrix<f64>) {
    let d = beta.nrows();
    while Cholesky::new(beta.clone()).is_none() {
        for k in 0..d {
            beta[(k, k)] += JITTER;
        }
    }
}

/// Regresses node `i` on its parents and on the pseudo-variables of its
/// spouses, then refreshes column `i` of `delta` and row/column `i` of `beta`.
fn update_node(s: &DMatrix<f64>, p: &mut ScmParams, i: usize, parents: &[usize], spouses: &[usize]) -> Result<()> {
    let d = p.d();
    if parents.is_empty() && spouses.is_empty() {
        p.beta[(i, i)] = s[(i, i)];
        return Ok(());
    }
    let rest: Vec<usize> = (0..d).filter(|&k| k != i).collect();
    let m = rest.len();
    // Inverse of beta without row/column i.
    let omega_rest = DMatrix::from_fn(m, m, |a, b| p.beta[(rest[a], rest[b])]);
    let omega_rest_inv = if spouses.is_empty() {
        DMatrix::zeros(m, m)
    } else {
        invert_pd(omega_rest)?
    };
    // Pseudo-variable for spouse k: Z_k = sum_l E_l (Omega_rest^-1)_{l k},
    // with residuals E = X (I - delta). Its loadings on the raw columns are
    // the columns of (I - delta)[:, rest] * Omega_rest^-1.
    let a_rest = DMatrix::from_fn(d, m, |r, c| {
        let col = rest[c];
        (if r == col { 1.0 } else { 0.0 }) - p.delta[(r, col)]
    });
    let spouse_pos: Vec<usize> = spouses.iter().map(|&k| rest.iter().position(|&r| r == k).expect("spouse in rest")).collect();
    let loadings_z = &a_rest * DMatrix::from_fn(m, spouses.len(), |r, c| omega_rest_inv[(r, spouse_pos[c])]);

    // Design columns expressed as loadings on the raw variables.
    let q = parents.len() + spouses.len();
    let mut w = DMatrix::zeros(d, q);
    for (c, &pa) in parents.iter().enumerate() {
        w[(pa, c)] = 1.0;
    }
    for c in 0..spouses.len() {
        w.set_column(parents.len() + c, &loadings_z.column(c));
    }
    let gram = w.transpose() * s * &w;
    let cross: DVector<f64> = w.transpose() * s.column(i);
    let coef = gram
        .clone()
        .cholesky()
        .map(|c| c.solve(&cross))
        .or_else(|| gram.clone().lu().solve(&cross))
        .ok_or_else(|| Error::Singular(format!("regression system for node {i}")))?;
    let rss = s[(i, i)] - 2.0 * coef.dot(&cross) + (coef.transpose() * &gram * &coef)[(0, 0)];

    for k in 0..d {
        p.delta[(k, i)] = 0.0;
    }
    for (c, &pa) in parents.iter().enumerate() {
        p.delta[(pa, i)] = coef[c];
    }
    for k in 0..d {
        if k != i {
            p.beta[(i, k)] = 0.0;
            p.beta[(k, i)] = 0.0;
        }
    }
    for (c, &sp) in spouses.iter().enumerate() {
        let v = coef[parents.len() + c];
        p.beta[(i, sp)] = v;
        p.beta[(sp, i)] = v;
    }
    let omega_i_rest = DVector::from_fn(m, |r, _| p.beta[(i, rest[r])]);
    let explained = (omega_i_rest.transpose() * &omega_rest_inv * &omega_i_rest)[(0, 0)];
    p.beta[(i, i)] = rss.max(0.0) + explained;
    Ok(())
}

fn invert_pd(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let mut jittered = m;
    for _ in 0..20 {
        if let Some(c) = Cholesky::new(jittered.clone()) {
            return Ok(c.inverse());
        }
        for k in 0..n {
            jittered[(k, k)] += JITTER;
        }
    }
    Err(Error::NotPositiveDefinite("error covariance block".into()))
}
