//! Linear Gaussian SCMs with latent confounding: random graph generation,
//! parameterization, implied covariance and sampling.
//!
//! The model is `V_j = sum_i delta[i][j] V_i + eps_j` with `eps ~ N(0, beta)`,
//! so the observed covariance is `(I - delta)^-T beta (I - delta)^-1`.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::{skeleton_of, Admg, Skeleton};
use crate::rng::{self, Rng};

pub const DIRECTED_WEIGHT_RANGE: (f64, f64) = (0.5, 2.0);
pub const BIDIRECTED_WEIGHT_RANGE: (f64, f64) = (0.4, 0.7);
pub const NOISE_VARIANCE_RANGE: (f64, f64) = (0.7, 1.2);

/// Coefficients `delta` (`delta[(i, j)]` weights `i -> j`) and the symmetric
/// noise covariance `beta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScmParams {
    pub delta: DMatrix<f64>,
    pub beta: DMatrix<f64>,
}

impl ScmParams {
    pub fn zeros(d: usize) -> Self {
        Self {
            delta: DMatrix::zeros(d, d),
            beta: DMatrix::zeros(d, d),
        }
    }

    pub fn d(&self) -> usize {
        self.delta.nrows()
    }

    /// Graph of non-zero entries: `delta[(i, j)] != 0` gives `i -> j`,
    /// off-diagonal `beta` gives `i <-> j`.
    pub fn support(&self) -> Admg {
        threshold_support(self, 0.0)
    }
}

pub(crate) fn threshold_support(p: &ScmParams, omega: f64) -> Admg {
    let d = p.d();
    let mut g = Admg::empty(d);
    for i in 0..d {
        for j in 0..d {
            if i == j {
                continue;
            }
            if p.delta[(i, j)].abs() > omega {
                g.add_directed(i, j);
            }
            if i < j && (p.beta[(i, j)].abs() > omega || p.beta[(j, i)].abs() > omega) {
                g.add_bidirected(i, j);
            }
        }
    }
    g
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    #[default]
    ErdosRenyi,
    ScaleFree,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSamplerConfig {
    pub d: usize,
    /// Average number of edges per node; the edge budget uses its midpoint.
    pub indegree_range: (f64, f64),
    /// Fraction of edges that are bidirected, drawn uniformly.
    pub bidirected_fraction_range: (f64, f64),
    pub seed: u64,
    #[serde(default)]
    pub topology: Topology,
}

impl GraphSamplerConfig {
    pub fn new(d: usize, seed: u64) -> Self {
        Self {
            d,
            indegree_range: (1.0, 1.5),
            bidirected_fraction_range: (0.05, 0.15),
            seed,
            topology: Topology::ErdosRenyi,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.indegree_range;
        let max = self.d.saturating_sub(1) as f64;
        if !(0.0 <= lo && lo <= hi && (hi <= max || self.d <= 1)) {
            return Err(Error::InvalidInput(format!("indegree range ({lo}, {hi}) outside [0, {max}]")));
        }
        let (flo, fhi) = self.bidirected_fraction_range;
        if !(0.0 <= flo && flo <= fhi && fhi <= 1.0) {
            return Err(Error::InvalidInput(format!("bidirected fraction range ({flo}, {fhi}) outside [0, 1]")));
        }
        Ok(())
    }
}

fn uniform_in(rng: &mut Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

fn signed_uniform(rng: &mut Rng, range: (f64, f64)) -> f64 {
    let mag = uniform_in(rng, range);
    if rng.gen::<bool>() {
        mag
    } else {
        -mag
    }
}

/// Edge budget split into (directed, bidirected) counts: the total is
/// `round(d * mean indegree)`, the bidirected share a uniform draw.
fn edge_budget(cfg: &GraphSamplerConfig, rng: &mut Rng) -> (usize, usize) {
    let d = cfg.d;
    let indegree = 0.5 * (cfg.indegree_range.0 + cfg.indegree_range.1);
    let fraction = uniform_in(rng, cfg.bidirected_fraction_range);
    let max_edges = d * d.saturating_sub(1) / 2;
    let total = ((d as f64 * indegree).round() as usize).min(max_edges);
    let bidirected = (total as f64 * fraction).round() as usize;
    (total - bidirected, bidirected)
}

/// Random ancestral ADMG. Directed edges follow a random topological order;
/// bidirected edges join random pairs with no ancestral relation.
pub fn sample_admg(cfg: &GraphSamplerConfig, rng: &mut Rng) -> Result<Admg> {
    cfg.validate()?;
    let d = cfg.d;
    let mut g = Admg::empty(d);
    if d < 2 {
        return Ok(g);
    }
    let (n_dir, n_bi) = edge_budget(cfg, rng);
    let mut order: Vec<usize> = (0..d).collect();
    order.shuffle(rng);
    match cfg.topology {
        Topology::ErdosRenyi => {
            let pairs = d * (d - 1) / 2;
            for k in index::sample(rng, pairs, n_dir.min(pairs)).into_vec() {
                let (a, b) = unrank_pair(k, d);
                g.add_directed(order[a], order[b]);
            }
        }
        Topology::ScaleFree => add_preferential_edges(&mut g, &order, n_dir, rng),
    }
    add_bidirected_edges(&mut g, n_bi, rng);
    Ok(g)
}

/// Erdős-Rényi ADMG; the spelling the CLI and docs use.
pub fn sample_er_admg(cfg: &GraphSamplerConfig, rng: &mut Rng) -> Result<Admg> {
    let mut cfg = cfg.clone();
    cfg.topology = Topology::ErdosRenyi;
    sample_admg(&cfg, rng)
}

/// Index `k` of the pairs `(a, b)`, `a < b < d`, in row-major order.
fn unrank_pair(mut k: usize, d: usize) -> (usize, usize) {
    for a in 0..d {
        let row = d - 1 - a;
        if k < row {
            return (a, a + 1 + k);
        }
        k -= row;
    }
    unreachable!("pair index out of range")
}

/// Each node after the first receives parents among earlier nodes in
/// `order`, chosen with probability proportional to degree + 1.
fn add_preferential_edges(g: &mut Admg, order: &[usize], n_dir: usize, rng: &mut Rng) {
    let d = order.len();
    let mut degree = vec![0usize; d];
    let per_node = n_dir as f64 / (d - 1) as f64;
    let mut placed = 0usize;
    for t in 1..d {
        let want = if t == d - 1 {
            n_dir - placed
        } else {
            per_node.floor() as usize + usize::from(rng.gen::<f64>() < per_node.fract())
        };
        let want = want.min(t).min(n_dir - placed);
        let mut chosen = vec![false; t];
        for _ in 0..want {
            let total: f64 = (0..t).filter(|&s| !chosen[s]).map(|s| degree[s] as f64 + 1.0).sum();
            let mut u = rng.gen::<f64>() * total;
            let mut pick = None;
            for s in (0..t).filter(|&s| !chosen[s]) {
                pick = Some(s);
                let w = degree[s] as f64 + 1.0;
                if u < w {
                    break;
                }
                u -= w;
            }
            if let Some(s) = pick {
                chosen[s] = true;
            }
        }
        for s in (0..t).filter(|&s| chosen[s]) {
            g.add_directed(order[s], order[t]);
            degree[s] += 1;
            degree[t] += 1;
            placed += 1;
        }
    }
}

fn add_bidirected_edges(g: &mut Admg, n_bi: usize, rng: &mut Rng) {
    let d = g.d();
    let anc = g.proper_ancestor_matrix();
    let mut candidates: Vec<(usize, usize)> = Vec::new();
    for i in 0..d {
        for j in (i + 1)..d {
            if !g.adjacent(i, j) && !anc[i * d + j] && !anc[j * d + i] {
                candidates.push((i, j));
            }
        }
    }
    candidates.shuffle(rng);
    for &(i, j) in candidates.iter().take(n_bi) {
        g.add_bidirected(i, j);
    }
}

/// Draws `delta` on directed edges from `±[0.5, 2.0]`, `beta` on bidirected
/// edges from `±[0.4, 0.7]`, and each `beta[i][i]` as `|U(±[0.7, 1.2])|` plus
/// the absolute off-diagonal row sum, which makes `beta` strictly
/// diagonally dominant.
pub fn parameterize_scm(g: &Admg, rng: &mut Rng) -> Result<ScmParams> {
    if !g.is_ancestral() {
        return Err(Error::NotAncestral);
    }
    let d = g.d();
    let mut p = ScmParams::zeros(d);
    for (i, j) in g.directed_edges() {
        p.delta[(i, j)] = signed_uniform(rng, DIRECTED_WEIGHT_RANGE);
    }
    for (i, j) in g.bidirected_edges() {
        let w = signed_uniform(rng, BIDIRECTED_WEIGHT_RANGE);
        p.beta[(i, j)] = w;
        p.beta[(j, i)] = w;
    }
    for i in 0..d {
        let off: f64 = (0..d).filter(|&j| j != i).map(|j| p.beta[(i, j)].abs()).sum();
        p.beta[(i, i)] = signed_uniform(rng, NOISE_VARIANCE_RANGE).abs() + off;
    }
    Ok(p)
}

/// `Sigma = (I - delta)^-T beta (I - delta)^-1`.
pub fn implied_covariance(p: &ScmParams) -> Result<DMatrix<f64>> {
    let d = p.d();
    let a = DMatrix::identity(d, d) - &p.delta;
    let inv = a
        .try_inverse()
        .ok_or_else(|| Error::Singular("I - delta".into()))?;
    let sigma = inv.transpose() * &p.beta * &inv;
    Ok(symmetrize(sigma))
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SamplingRoute {
    /// Draw `eps ~ N(0, beta)` and solve `V = (I - delta^T)^-1 eps`.
    #[default]
    Structural,
    /// Draw directly from `N(0, Sigma)` through its Cholesky factor.
    CovarianceFactor,
}

pub fn sample_dataset(p: &ScmParams, n: usize, rng: &mut Rng) -> Result<Dataset> {
    sample_dataset_via(p, n, rng, SamplingRoute::Structural)
}

pub fn sample_dataset_via(p: &ScmParams, n: usize, rng: &mut Rng, route: SamplingRoute) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidInput("sample count must be positive".into()));
    }
    let d = p.d();
    let x = match route {
        SamplingRoute::Structural => {
            let chol = Cholesky::new(p.beta.clone())
                .ok_or_else(|| Error::NotPositiveDefinite("beta".into()))?;
            let l = chol.l();
            let a = DMatrix::identity(d, d) - p.delta.transpose();
            let lu = a.lu();
            let mut x = DMatrix::zeros(n, d);
            let mut z = DVector::zeros(d);
            for r in 0..n {
                for v in z.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                let eps = &l * &z;
                let v = lu
                    .solve(&eps)
                    .ok_or_else(|| Error::Singular("I - delta^T".into()))?;
                x.set_row(r, &v.transpose());
            }
            x
        }
        SamplingRoute::CovarianceFactor => {
            let sigma = implied_covariance(p)?;
            let chol = Cholesky::new(sigma).ok_or_else(|| Error::NotPositiveDefinite("Sigma".into()))?;
            let l = chol.l();
            let mut x = DMatrix::zeros(n, d);
            let mut z = DVector::zeros(d);
            for r in 0..n {
                for v in z.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                x.set_row(r, &(&l * &z).transpose());
            }
            x
        }
    };
    Dataset::with_default_names(x)
}

/// One simulated instance: generating graph, its parameters and a dataset.
#[derive(Clone, Debug)]
pub struct SimulatedInstance {
    pub graph: Admg,
    pub params: ScmParams,
    pub data: Dataset,
    pub seed: u64,
}

/// Per-instance seed for task `index` of a suite seeded with `seed`.
pub fn instance_seed(seed: u64, index: u64) -> u64 {
    use rand::RngCore;
    rng::stream(seed, index).next_u64()
}

pub fn simulate_instance(cfg: &GraphSamplerConfig, n: usize) -> Result<SimulatedInstance> {
    let mut rng = rng::seeded(cfg.seed);
    let graph = sample_admg(cfg, &mut rng)?;
    let params = parameterize_scm(&graph, &mut rng)?;
    let data = sample_dataset(&params, n, &mut rng)?;
    Ok(SimulatedInstance {
        graph,
        params,
        data,
        seed: cfg.seed,
    })
}

/// `count` independent instances. Instance `k` uses `cfg` with its seed
/// replaced by `instance_seed(cfg.seed, k)` and, when `d_range` is given,
/// a node count drawn uniformly from it.
pub fn generate_suite(count: usize, cfg: &GraphSamplerConfig, d_range: Option<(usize, usize)>, n: usize) -> Result<Vec<SimulatedInstance>> {
    (0..count)
        .into_par_iter()
        .map(|k| {
            let seed = instance_seed(cfg.seed, k as u64);
            let mut c = cfg.clone();
            c.seed = seed;
            if let Some((lo, hi)) = d_range {
                c.d = rng::stream(seed, u64::MAX).gen_range(lo..=hi);
            }
            simulate_instance(&c, n)
        })
        .collect()
}

/// `(dataset, skeleton)` training pairs from the static simulator.
pub fn generate_corpus(count: usize, cfg: &GraphSamplerConfig, d_range: Option<(usize, usize)>, n: usize) -> Result<Vec<(Dataset, Skeleton)>> {
    Ok(generate_suite(count, cfg, d_range, n)?
        .into_iter()
        .map(|inst| {
            let s = skeleton_of(&inst.graph);
            (inst.data, s)
        })
        .collect())
}
