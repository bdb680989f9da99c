//! Differentiable ADMG learning: least-squares pseudo-variable loss under an
//! augmented Lagrangian on the ancestrality penalty `h`, followed by
//! thresholding to a discrete ancestral graph.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::{Admg, Skeleton};
use crate::optim::{self, OwlqnConfig, Smooth};
use crate::scm::{threshold_support, ScmParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbicConfig {
    pub lambda: f64,
    pub omega: f64,
    /// Separate thresholds for directed and bidirected coefficients.
    pub omega_delta: Option<f64>,
    pub omega_beta: Option<f64>,
    pub alm_steps: usize,
    pub inner_steps: usize,
    pub rho0: f64,
    pub rho_growth: f64,
    pub rho_max: f64,
    pub alpha0: f64,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    pub h_tol: f64,
    pub standardize: bool,
    pub seed: u64,
}

impl Default for AbicConfig {
    fn default() -> Self {
        Self {
            lambda: 0.05,
            omega: 0.05,
            omega_delta: None,
            omega_beta: None,
            alm_steps: 20,
            inner_steps: 10,
            rho0: 1.0,
            rho_growth: 10.0,
            rho_max: 1e16,
            alpha0: 0.0,
            inner_tol: 1e-6,
            inner_max_iter: 100,
            h_tol: 1e-8,
            standardize: false,
            seed: 0,
        }
    }
}

impl AbicConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_owned()));
        if !(self.omega >= 0.0) || self.omega_delta.is_some_and(|w| !(w >= 0.0)) || self.omega_beta.is_some_and(|w| !(w >= 0.0)) {
            return bad("thresholds must be non-negative");
        }
        if !(self.rho_growth > 1.0) || !(self.rho0 > 0.0) {
            return bad("penalty schedule needs rho0 > 0 and rho_growth > 1");
        }
        if self.alm_steps == 0 || self.inner_steps == 0 || self.inner_max_iter == 0 {
            return bad("step counts must be at least 1");
        }
        if !(self.lambda >= 0.0) {
            return bad("lambda must be non-negative");
        }
        Ok(())
    }

    fn omegas(&self) -> (f64, f64) {
        (self.omega_delta.unwrap_or(self.omega), self.omega_beta.unwrap_or(self.omega))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlmState {
    pub alpha: f64,
    pub rho: f64,
    pub t: usize,
    pub h_value: f64,
}

fn hadamard_sq_offdiag(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut w = m.component_mul(m);
    w.fill_diagonal(0.0);
    w
}

/// `tr(exp(W_D)) - d + sum(exp(W_D) * W_B)` with `W_D = delta * delta`,
/// `W_B = beta * beta` (element-wise, diagonals zeroed).
pub fn h_admg(delta: &DMatrix<f64>, beta: &DMatrix<f64>) -> f64 {
    let d = delta.nrows();
    let e = hadamard_sq_offdiag(delta).exp();
    e.trace() - d as f64 + e.component_mul(&hadamard_sq_offdiag(beta)).sum()
}

/// Value and gradients of [`h_admg`]. The `beta` gradient is with respect
/// to the shared value of each symmetric pair and is placed at both
/// positions.
pub fn h_admg_value_gradient(delta: &DMatrix<f64>, beta: &DMatrix<f64>) -> (f64, DMatrix<f64>, DMatrix<f64>) {
    let d = delta.nrows();
    let wd = hadamard_sq_offdiag(delta);
    let wb = hadamard_sq_offdiag(beta);
    // exp([[A^T, C], [0, A^T]]) holds exp(A^T) and the Frechet derivative
    // of exp at A^T in direction C.
    let wdt = wd.transpose();
    let mut block = DMatrix::zeros(2 * d, 2 * d);
    block.view_mut((0, 0), (d, d)).copy_from(&wdt);
    block.view_mut((d, d), (d, d)).copy_from(&wdt);
    block.view_mut((0, d), (d, d)).copy_from(&wb);
    let eb = block.exp();
    let et = eb.view((0, 0), (d, d)).clone_owned();
    let frechet = eb.view((0, d), (d, d)).clone_owned();
    let e = et.transpose();
    let h = e.trace() - d as f64 + e.component_mul(&wb).sum();
    let mut gd = (delta * 2.0).component_mul(&(&et + &frechet));
    gd.fill_diagonal(0.0);
    let mut gb = (beta * 2.0).component_mul(&(&e + &et));
    gb.fill_diagonal(0.0);
    (h, gd, gb)
}

pub fn h_admg_gradient(delta: &DMatrix<f64>, beta: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let (_, gd, gb) = h_admg_value_gradient(delta, beta);
    (gd, gb)
}

/// Least-squares loss with pseudo-variables frozen at a reference point.
///
/// Node `i` is explained by `delta[:, i]` on the raw variables and by
/// `beta[:, i]` on pseudo-variables `E_{-i} Omega_{-i,-i}^-1`, where the
/// residuals `E` and `Omega` come from the reference parameters. Every
/// quantity is expressed as loadings on the raw variables so the loss only
/// needs the sample covariance.
#[derive(Clone, Debug)]
pub struct PseudoLoss {
    s: DMatrix<f64>,
    /// Loadings of node `i`'s pseudo-variables (column `k` for spouse `k`).
    loadings: Vec<DMatrix<f64>>,
    /// `Omega_{-i,-i}^-1` embedded with a zero row and column at `i`.
    omega_rest_inv: Vec<DMatrix<f64>>,
}

impl PseudoLoss {
    pub fn new(s: &DMatrix<f64>, reference: &ScmParams) -> Result<Self> {
        let d = s.nrows();
        let p = invert_spd(&reference.beta)?;
        let a = DMatrix::identity(d, d) - &reference.delta;
        let mut loadings = Vec::with_capacity(d);
        let mut inv_rest = Vec::with_capacity(d);
        for i in 0..d {
            let pii = p[(i, i)];
            let mut m = DMatrix::zeros(d, d);
            for r in 0..d {
                for c in 0..d {
                    if r != i && c != i {
                        m[(r, c)] = p[(r, c)] - p[(r, i)] * p[(i, c)] / pii;
                    }
                }
            }
            loadings.push(&a * &m);
            inv_rest.push(m);
        }
        Ok(Self {
            s: s.clone(),
            loadings,
            omega_rest_inv: inv_rest,
        })
    }

    pub fn d(&self) -> usize {
        self.s.nrows()
    }

    fn residual(&self, i: usize, delta: &DMatrix<f64>, beta: &DMatrix<f64>) -> DVector<f64> {
        let d = self.d();
        let mut b = beta.column(i).clone_owned();
        b[i] = 0.0;
        let mut r = -(&self.loadings[i] * b);
        for k in 0..d {
            if k != i {
                r[k] -= delta[(k, i)];
            }
        }
        r[i] += 1.0;
        r
    }

    /// Loss value, plus gradients when requested (the `beta` gradient per
    /// symmetric pair, placed at both positions).
    pub fn evaluate(&self, delta: &DMatrix<f64>, beta: &DMatrix<f64>, grads: Option<(&mut DMatrix<f64>, &mut DMatrix<f64>)>) -> f64 {
        let d = self.d();
        let mut value = 0.0;
        match grads {
            None => {
                for i in 0..d {
                    let r = self.residual(i, delta, beta);
                    value += 0.5 * (&self.s * &r).dot(&r);
                }
            }
            Some((gd, gb)) => {
                gd.fill(0.0);
                gb.fill(0.0);
                for i in 0..d {
                    let r = self.residual(i, delta, beta);
                    let u = &self.s * &r;
                    value += 0.5 * u.dot(&r);
                    let v = self.loadings[i].tr_mul(&u);
                    for k in 0..d {
                        if k != i {
                            gd[(k, i)] = -u[k];
                            gb[(k, i)] -= v[k];
                            gb[(i, k)] -= v[k];
                        }
                    }
                }
            }
        }
        value
    }

    /// Noise variance of node `i` consistent with the current off-diagonal
    /// `beta`: residual variance plus the part explained by spouses.
    fn node_variance(&self, i: usize, delta: &DMatrix<f64>, beta: &DMatrix<f64>) -> f64 {
        let r = self.residual(i, delta, beta);
        let mut b = beta.column(i).clone_owned();
        b[i] = 0.0;
        let explained = (&self.omega_rest_inv[i] * &b).dot(&b);
        (&self.s * &r).dot(&r).max(0.0) + explained
    }
}

fn invert_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(c) = m.clone().cholesky() {
        return Ok(c.inverse());
    }
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("noise covariance".into()))
}

/// Objective value and gradients: pseudo-variable loss, augmented
/// Lagrangian on `h`, and `lambda` times the L1 norm of `delta` and the
/// off-diagonal `beta` (subgradient 0 at exact zeros).
#[derive(Clone, Debug)]
pub struct Objective {
    pub value: f64,
    pub grad_delta: DMatrix<f64>,
    pub grad_beta: DMatrix<f64>,
}

pub fn objective(delta: &DMatrix<f64>, beta: &DMatrix<f64>, loss: &PseudoLoss, alm: &AlmState, cfg: &AbicConfig) -> Result<Objective> {
    let d = delta.nrows();
    let mut gd = DMatrix::zeros(d, d);
    let mut gb = DMatrix::zeros(d, d);
    let data = loss.evaluate(delta, beta, Some((&mut gd, &mut gb)));
    if !data.is_finite() {
        return Err(Error::NonFinite("least-squares loss".into()));
    }
    let (h, hd, hb) = h_admg_value_gradient(delta, beta);
    if !h.is_finite() {
        return Err(Error::NonFinite("ancestrality penalty".into()));
    }
    let mult = alm.alpha + alm.rho * h;
    gd += hd * mult;
    gb += hb * mult;
    let mut l1 = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                l1 += delta[(i, j)].abs() + beta[(i, j)].abs();
                gd[(i, j)] += cfg.lambda * sign0(delta[(i, j)]);
                // Both triangles carry the same value.
                gb[(i, j)] += 2.0 * cfg.lambda * sign0(beta[(i, j)]);
            }
        }
    }
    let value = data + alm.alpha * h + 0.5 * alm.rho * h * h + cfg.lambda * l1;
    Ok(Objective {
        value,
        grad_delta: gd,
        grad_beta: gb,
    })
}

fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Free coordinates of the optimization: directed pairs `(i, j)` and
/// bidirected pairs `(i, j)` with `i < j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub d: usize,
    pub delta: Vec<(usize, usize)>,
    pub beta: Vec<(usize, usize)>,
}

impl Layout {
    pub fn new(d: usize, mask: Option<&Skeleton>) -> Self {
        let allowed = |i: usize, j: usize| mask.map_or(true, |s| s.adjacent(i, j));
        let mut delta = Vec::new();
        let mut beta = Vec::new();
        for i in 0..d {
            for j in 0..d {
                if i != j && allowed(i, j) {
                    delta.push((i, j));
                    if i < j {
                        beta.push((i, j));
                    }
                }
            }
        }
        Self { d, delta, beta }
    }

    pub fn len(&self) -> usize {
        self.delta.len() + self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn pack(&self, p: &ScmParams) -> Vec<f64> {
        self.delta
            .iter()
            .map(|&(i, j)| p.delta[(i, j)])
            .chain(self.beta.iter().map(|&(i, j)| p.beta[(i, j)]))
            .collect()
    }

    /// Writes `x` into `p`, leaving the `beta` diagonal untouched.
    fn unpack_into(&self, x: &[f64], p: &mut ScmParams) {
        let nd = self.delta.len();
        for (k, &(i, j)) in self.delta.iter().enumerate() {
            p.delta[(i, j)] = x[k];
        }
        for (k, &(i, j)) in self.beta.iter().enumerate() {
            p.beta[(i, j)] = x[nd + k];
            p.beta[(j, i)] = x[nd + k];
        }
    }

    fn gather(&self, gd: &DMatrix<f64>, gb: &DMatrix<f64>, out: &mut [f64]) {
        let nd = self.delta.len();
        for (k, &(i, j)) in self.delta.iter().enumerate() {
            out[k] = gd[(i, j)];
        }
        for (k, &(i, j)) in self.beta.iter().enumerate() {
            out[nd + k] = gb[(i, j)];
        }
    }
}

/// Position of one inner step within the nested loops (both 0-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepContext {
    pub t_outer: usize,
    pub t_inner: usize,
}

/// Per-coordinate filter applied to each inner minimizer result.
pub trait UpdateGuide {
    /// Whether [`UpdateGuide::filter`] needs the smooth-objective gradient
    /// at the current point.
    fn wants_gradients(&self) -> bool {
        false
    }

    /// Resets rejected coordinates of `proposed` to their `current` values
    /// and returns the number of accepted free coordinates. `grads` is the
    /// full objective gradient at `current` when requested.
    fn filter(
        &mut self,
        step: StepContext,
        layout: &Layout,
        current: &ScmParams,
        proposed: &mut ScmParams,
        grads: Option<(&DMatrix<f64>, &DMatrix<f64>)>,
    ) -> usize;
}

/// Accepts every proposal.
pub struct AcceptAll;

impl UpdateGuide for AcceptAll {
    fn filter(&mut self, _: StepContext, layout: &Layout, _: &ScmParams, _: &mut ScmParams, _: Option<(&DMatrix<f64>, &DMatrix<f64>)>) -> usize {
        layout.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t_outer: usize,
    pub t_inner: usize,
    pub f: f64,
    pub h: f64,
    pub accepted: usize,
    pub rho: f64,
    pub alpha: f64,
    pub inner_iterations: usize,
}

pub fn write_trace<W: std::io::Write>(trace: &[TraceRecord], mut w: W) -> Result<()> {
    for rec in trace {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct AbicResult {
    pub params: ScmParams,
    pub graph: Admg,
    pub trace: Vec<TraceRecord>,
    /// Threshold actually used; larger than configured when ancestrality
    /// had to be restored.
    pub omega_used: f64,
    pub final_h: f64,
    pub converged: bool,
    pub timed_out: bool,
}

#[derive(Default)]
pub struct FitOptions<'a> {
    pub guide: Option<&'a mut dyn UpdateGuide>,
    /// Restrict edges to this skeleton and keep every one of its pairs
    /// adjacent in the output.
    pub skeleton: Option<&'a Skeleton>,
    pub timeout: Option<Duration>,
}

struct InnerProblem<'a> {
    loss: &'a PseudoLoss,
    layout: &'a Layout,
    alm: AlmState,
    work: ScmParams,
    gd: DMatrix<f64>,
    gb: DMatrix<f64>,
}

impl InnerProblem<'_> {
    fn load(&mut self, x: &[f64]) {
        self.layout.unpack_into(x, &mut self.work);
    }
}

impl Smooth for InnerProblem<'_> {
    fn value(&mut self, x: &[f64]) -> f64 {
        self.load(x);
        let data = self.loss.evaluate(&self.work.delta, &self.work.beta, None);
        let h = h_admg(&self.work.delta, &self.work.beta);
        data + self.alm.alpha * h + 0.5 * self.alm.rho * h * h
    }

    fn value_grad(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.load(x);
        let data = self.loss.evaluate(&self.work.delta, &self.work.beta, Some((&mut self.gd, &mut self.gb)));
        let (h, hd, hb) = h_admg_value_gradient(&self.work.delta, &self.work.beta);
        let mult = self.alm.alpha + self.alm.rho * h;
        self.gd += hd * mult;
        self.gb += hb * mult;
        self.layout.gather(&self.gd, &self.gb, grad);
        data + self.alm.alpha * h + 0.5 * self.alm.rho * h * h
    }
}

pub fn abic_fit(data: &Dataset, cfg: &AbicConfig, guide: Option<&mut dyn UpdateGuide>) -> Result<AbicResult> {
    abic_fit_with(data, cfg, FitOptions { guide, ..FitOptions::default() })
}

pub fn abic_fit_with(data: &Dataset, cfg: &AbicConfig, opts: FitOptions<'_>) -> Result<AbicResult> {
    cfg.validate()?;
    let d = data.d();
    if let Some(s) = opts.skeleton {
        if s.d() != d {
            return Err(Error::DimensionMismatch { expected: d, got: s.d() });
        }
    }
    let s = if cfg.standardize { data.standardized().covariance() } else { data.covariance() };
    let start = Instant::now();
    let layout = Layout::new(d, opts.skeleton);
    let mut l1 = vec![cfg.lambda; layout.delta.len()];
    l1.extend(std::iter::repeat(2.0 * cfg.lambda).take(layout.beta.len()));
    let inner_cfg = OwlqnConfig {
        max_iter: cfg.inner_max_iter,
        tol: cfg.inner_tol,
        memory: 10,
    };
    let mut accept_all = AcceptAll;
    let guide: &mut dyn UpdateGuide = match opts.guide {
        Some(g) => g,
        None => &mut accept_all,
    };

    let mut params = ScmParams::zeros(d);
    for i in 0..d {
        params.beta[(i, i)] = s[(i, i)];
    }
    let mut alm = AlmState {
        alpha: cfg.alpha0,
        rho: cfg.rho0,
        t: 1,
        h_value: 0.0,
    };
    let mut h_prev = f64::INFINITY;
    let mut trace = Vec::new();
    let mut timed_out = false;

    'outer: for t_outer in 0..cfg.alm_steps {
        alm.t = t_outer + 1;
        for t_inner in 0..cfg.inner_steps {
            let loss = PseudoLoss::new(&s, &params)?;
            let x0 = layout.pack(&params);
            let mut problem = InnerProblem {
                loss: &loss,
                layout: &layout,
                alm,
                work: params.clone(),
                gd: DMatrix::zeros(d, d),
                gb: DMatrix::zeros(d, d),
            };
            let grads = if guide.wants_gradients() {
                let obj = objective(&params.delta, &params.beta, &loss, &alm, cfg)?;
                Some((obj.grad_delta, obj.grad_beta))
            } else {
                None
            };
            let out = optim::minimize(&mut problem, x0, &l1, &inner_cfg);
            let mut proposed = params.clone();
            layout.unpack_into(&out.x, &mut proposed);
            let accepted = guide.filter(
                StepContext { t_outer, t_inner },
                &layout,
                &params,
                &mut proposed,
                grads.as_ref().map(|(a, b)| (a, b)),
            );
            params = proposed;
            refresh_noise_variances(&loss, &mut params);
            if params.delta.iter().chain(params.beta.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Diverged(format!("non-finite parameters at outer step {t_outer}")));
            }
            let h = h_admg(&params.delta, &params.beta);
            let f = loss.evaluate(&params.delta, &params.beta, None)
                + alm.alpha * h
                + 0.5 * alm.rho * h * h
                + cfg.lambda * l1_offdiag(&params);
            alm.h_value = h;
            trace.push(TraceRecord {
                t_outer,
                t_inner,
                f,
                h,
                accepted,
                rho: alm.rho,
                alpha: alm.alpha,
                inner_iterations: out.iterations,
            });
            if opts.timeout.is_some_and(|limit| start.elapsed() >= limit) {
                timed_out = true;
                break 'outer;
            }
        }
        let h = alm.h_value;
        if !h.is_finite() {
            return Err(Error::Diverged(format!("penalty became non-finite at outer step {t_outer}")));
        }
        if h <= cfg.h_tol {
            break;
        }
        alm.alpha += alm.rho * h;
        if h > 0.25 * h_prev {
            alm.rho = (alm.rho * cfg.rho_growth).min(cfg.rho_max);
        }
        h_prev = h;
    }

    let final_h = h_admg(&params.delta, &params.beta);
    let (graph, omega_used) = ancestral_threshold(&params, cfg, opts.skeleton);
    Ok(AbicResult {
        params,
        graph,
        trace,
        omega_used,
        final_h,
        converged: final_h <= cfg.h_tol,
        timed_out,
    })
}

fn l1_offdiag(p: &ScmParams) -> f64 {
    let d = p.d();
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                s += p.delta[(i, j)].abs() + p.beta[(i, j)].abs();
            }
        }
    }
    s
}

/// Sets each `beta[i][i]` to the residual variance of node `i` plus the
/// spouse-explained part, then lifts the spectrum if `beta` is not positive
/// definite.
fn refresh_noise_variances(loss: &PseudoLoss, p: &mut ScmParams) {
    let d = p.d();
    let vars: Vec<f64> = (0..d).map(|i| loss.node_variance(i, &p.delta, &p.beta)).collect();
    for (i, v) in vars.into_iter().enumerate() {
        p.beta[(i, i)] = v.max(1e-8);
    }
    if p.beta.clone().cholesky().is_none() {
        let min_eig = p.beta.clone().symmetric_eigen().eigenvalues.min();
        let lift = -min_eig + 1e-6;
        for i in 0..d {
            p.beta[(i, i)] += lift;
        }
    }
}

/// `1(|delta| > omega)` and `1(|beta| > omega)` with `beta` symmetrized by OR.
pub fn threshold_to_admg(p: &ScmParams, omega: f64) -> Admg {
    threshold_support(p, omega)
}

fn threshold_split(p: &ScmParams, omega_delta: f64, omega_beta: f64) -> Admg {
    let d = p.d();
    let mut g = Admg::empty(d);
    for i in 0..d {
        for j in 0..d {
            if i == j {
                continue;
            }
            if p.delta[(i, j)].abs() > omega_delta {
                g.add_directed(i, j);
            }
            if i < j && p.beta[(i, j)].abs().max(p.beta[(j, i)].abs()) > omega_beta {
                g.add_bidirected(i, j);
            }
        }
    }
    g
}

/// Thresholds at the configured level, raising it to the smallest value
/// that yields an ancestral graph if needed. With a skeleton, pairs left
/// without an edge are then reconnected by the strongest edge type that
/// keeps the graph ancestral.
fn ancestral_threshold(p: &ScmParams, cfg: &AbicConfig, skeleton: Option<&Skeleton>) -> (Admg, f64) {
    let (wd, wb) = cfg.omegas();
    let at = |extra: f64| threshold_split(p, wd.max(extra), wb.max(extra));
    let base = at(0.0);
    let (mut g, used) = if base.is_ancestral() {
        (base, cfg.omega)
    } else {
        let mut levels: Vec<f64> = p.delta.iter().chain(p.beta.iter()).map(|v| v.abs()).filter(|&v| v > wd.min(wb)).collect();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        // Ancestrality is monotone in the threshold: removing edges never
        // creates an ancestral relation.
        let (mut lo, mut hi) = (0usize, levels.len() - 1);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if at(levels[mid]).is_ancestral() {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        (at(levels[lo]), levels[lo])
    };
    if let Some(s) = skeleton {
        for (i, j) in s.edges() {
            if g.adjacent(i, j) {
                continue;
            }
            let mut options = [
                (p.delta[(i, j)].abs(), 0u8),
                (p.delta[(j, i)].abs(), 1),
                (p.beta[(i, j)].abs(), 2),
            ];
            options.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            for (_, kind) in options {
                match kind {
                    0 => g.add_directed(i, j),
                    1 => g.add_directed(j, i),
                    _ => g.add_bidirected(i, j),
                }
                if g.is_ancestral() {
                    break;
                }
                g.remove_all(i, j);
            }
        }
    }
    (g, used)
}

#[cfg(test)]
mod tests;
