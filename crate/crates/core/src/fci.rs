//! Constraint-based MAG learning: PC-stable adjacency search, optional
//! possible-d-separation refinement, and orientation to a PAG.

use std::collections::VecDeque;

use itertools::Itertools;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ci::CovarianceCache;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::{maximal_ancestral_projection, orient_pag, Admg, ColliderOracle, Mark, Pag, Skeleton};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FciConfig {
    pub alpha: f64,
    pub max_cond_size: usize,
    pub use_possible_dsep: bool,
}

impl Default for FciConfig {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            max_cond_size: 4,
            use_possible_dsep: false,
        }
    }
}

impl FciConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidInput(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        Ok(())
    }
}

/// A conditional independence test returning p-values. `None` means the
/// test could not be run (for example a singular conditioning set) and
/// counts as no evidence of independence.
pub trait IndependenceTest: Sync {
    fn d(&self) -> usize;
    fn p_value(&self, i: usize, j: usize, z: &[usize]) -> Option<f64>;
}

impl IndependenceTest for CovarianceCache {
    fn d(&self) -> usize {
        CovarianceCache::d(self)
    }

    fn p_value(&self, i: usize, j: usize, z: &[usize]) -> Option<f64> {
        self.test(i, j, z).ok().map(|r| r.p_value)
    }
}

/// m-separation in a known graph: p = 1 when separated, 0 otherwise.
pub struct SeparationOracle<'a>(pub &'a Admg);

impl IndependenceTest for SeparationOracle<'_> {
    fn d(&self) -> usize {
        self.0.d()
    }

    fn p_value(&self, i: usize, j: usize, z: &[usize]) -> Option<f64> {
        Some(if self.0.m_separated(i, j, z) { 1.0 } else { 0.0 })
    }
}

/// Output of the adjacency search.
#[derive(Clone, Debug)]
pub struct AdjacencySearch {
    pub skeleton: Skeleton,
    /// Largest p-value seen for each pair over all tested sets.
    pub max_p: DMatrix<f64>,
    sepsets: Vec<Option<Vec<usize>>>,
}

impl AdjacencySearch {
    pub fn sepset(&self, i: usize, j: usize) -> Option<&[usize]> {
        self.sepsets[i * self.skeleton.d() + j].as_deref()
    }

    fn record_sepset(&mut self, i: usize, j: usize, z: Vec<usize>) {
        let d = self.skeleton.d();
        self.sepsets[i * d + j] = Some(z.clone());
        self.sepsets[j * d + i] = Some(z);
        self.skeleton.set(i, j, false);
    }

    fn bump_p(&mut self, i: usize, j: usize, p: f64) {
        if p > self.max_p[(i, j)] {
            self.max_p[(i, j)] = p;
            self.max_p[(j, i)] = p;
        }
    }
}

struct PairOutcome {
    i: usize,
    j: usize,
    max_p: f64,
    sepset: Option<Vec<usize>>,
}

/// Tests `i` against `j` given subsets of each candidate list in turn,
/// sizes fixed at `size`, lexicographic order, stopping at the first
/// separating set.
fn test_pair(test: &impl IndependenceTest, i: usize, j: usize, candidates: [&[usize]; 2], size: usize, alpha: f64) -> PairOutcome {
    let mut out = PairOutcome { i, j, max_p: 0.0, sepset: None };
    for cand in candidates {
        if cand.len() < size {
            continue;
        }
        for z in cand.iter().copied().combinations(size) {
            let Some(p) = test.p_value(i, j, &z) else { continue };
            out.max_p = out.max_p.max(p);
            if p > alpha {
                out.sepset = Some(z);
                return out;
            }
        }
    }
    out
}

/// PC-stable adjacency search: at each conditioning size the neighborhoods
/// are frozen, every remaining pair is tested in parallel, and removals are
/// applied together.
pub fn adjacency_search(test: &impl IndependenceTest, cfg: &FciConfig) -> AdjacencySearch {
    let d = test.d();
    let mut res = AdjacencySearch {
        skeleton: Skeleton::complete(d),
        max_p: DMatrix::zeros(d, d),
        sepsets: vec![None; d * d],
    };
    for size in 0..=cfg.max_cond_size {
        let nbrs: Vec<Vec<usize>> = (0..d).map(|v| res.skeleton.neighbors(v)).collect();
        let pairs = res.skeleton.edges();
        let outcomes: Vec<PairOutcome> = pairs
            .par_iter()
            .filter_map(|&(i, j)| {
                let ci: Vec<usize> = nbrs[i].iter().copied().filter(|&v| v != j).collect();
                let cj: Vec<usize> = nbrs[j].iter().copied().filter(|&v| v != i).collect();
                if ci.len() < size && cj.len() < size {
                    return None;
                }
                Some(test_pair(test, i, j, [&ci, &cj], size, cfg.alpha))
            })
            .collect();
        if outcomes.is_empty() {
            break;
        }
        for o in outcomes {
            res.bump_p(o.i, o.j, o.max_p);
            if let Some(z) = o.sepset {
                res.record_sepset(o.i, o.j, z);
            }
        }
    }
    res
}

struct SepsetOracle<'a>(&'a AdjacencySearch);

impl SepsetOracle<'_> {
    fn separates(&self, a: usize, b: usize, c: usize) -> bool {
        self.0.sepset(a, c).is_some_and(|z| z.contains(&b))
    }
}

impl ColliderOracle for SepsetOracle<'_> {
    fn unshielded_collider(&self, a: usize, b: usize, c: usize) -> bool {
        !self.separates(a, b, c)
    }

    fn discriminated_collider(&self, x: usize, _a: usize, b: usize, c: usize) -> bool {
        !self.separates(x, b, c)
    }
}

/// Nodes reachable from `x` along paths on which every inner node is a
/// collider or closes a triangle with its two path neighbors.
fn possible_dsep(pag: &Pag, x: usize) -> Vec<usize> {
    let d = pag.d();
    let mut seen_state = vec![false; d * d];
    let mut in_set = vec![false; d];
    let mut queue = VecDeque::new();
    for v in pag.neighbors(x) {
        in_set[v] = true;
        seen_state[x * d + v] = true;
        queue.push_back((x, v));
    }
    while let Some((a, b)) = queue.pop_front() {
        for c in pag.neighbors(b) {
            if c == a || c == x || seen_state[b * d + c] {
                continue;
            }
            let collider = pag.mark(a, b) == Mark::Arrow && pag.mark(c, b) == Mark::Arrow;
            if collider || pag.adjacent(a, c) {
                seen_state[b * d + c] = true;
                in_set[c] = true;
                queue.push_back((b, c));
            }
        }
    }
    (0..d).filter(|&v| in_set[v] && v != x).collect()
}

fn possible_dsep_stage(test: &impl IndependenceTest, cfg: &FciConfig, res: &mut AdjacencySearch) {
    let d = test.d();
    let mut pag = Pag::circles_from_skeleton(&res.skeleton);
    orient_pag(&mut pag, &SepsetOracle(res));
    let pds: Vec<Vec<usize>> = (0..d).map(|v| possible_dsep(&pag, v)).collect();
    let pairs = res.skeleton.edges();
    let outcomes: Vec<PairOutcome> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let ci: Vec<usize> = pds[i].iter().copied().filter(|&v| v != j).collect();
            let cj: Vec<usize> = pds[j].iter().copied().filter(|&v| v != i).collect();
            let mut acc = PairOutcome { i, j, max_p: 0.0, sepset: None };
            for size in 1..=cfg.max_cond_size {
                let o = test_pair(test, i, j, [&ci, &cj], size, cfg.alpha);
                acc.max_p = acc.max_p.max(o.max_p);
                if o.sepset.is_some() {
                    acc.sepset = o.sepset;
                    break;
                }
            }
            acc
        })
        .collect();
    for o in outcomes {
        res.bump_p(o.i, o.j, o.max_p);
        if let Some(z) = o.sepset {
            res.record_sepset(o.i, o.j, z);
        }
    }
}

/// Adjacency search, optional possible-d-sep stage, then orientation.
pub fn fci_pag_with(test: &impl IndependenceTest, cfg: &FciConfig) -> (Pag, AdjacencySearch) {
    let mut res = adjacency_search(test, cfg);
    if cfg.use_possible_dsep {
        possible_dsep_stage(test, cfg, &mut res);
    }
    let mut pag = Pag::circles_from_skeleton(&res.skeleton);
    orient_pag(&mut pag, &SepsetOracle(&res));
    (pag, res)
}

fn data_test(data: &Dataset, cfg: &FciConfig) -> Result<(CovarianceCache, FciConfig)> {
    cfg.validate()?;
    let mut cfg = *cfg;
    // Conditioning sets never exceed what the sample size supports.
    cfg.max_cond_size = cfg.max_cond_size.min(data.n().saturating_sub(4));
    Ok((CovarianceCache::new(data), cfg))
}

pub fn fci_skeleton_with_pvalues(data: &Dataset, cfg: &FciConfig) -> Result<(Skeleton, DMatrix<f64>)> {
    let (cache, cfg) = data_test(data, cfg)?;
    let mut res = adjacency_search(&cache, &cfg);
    if cfg.use_possible_dsep {
        possible_dsep_stage(&cache, &cfg, &mut res);
    }
    Ok((res.skeleton, res.max_p))
}

pub fn fci_pag(data: &Dataset, cfg: &FciConfig) -> Result<Pag> {
    let (cache, cfg) = data_test(data, cfg)?;
    Ok(fci_pag_with(&cache, &cfg).0)
}

/// One MAG from the learned class.
pub fn fci_learn(data: &Dataset, cfg: &FciConfig) -> Result<Admg> {
    pag_to_mag(&fci_pag(data, cfg)?)
}

/// Picks a concrete MAG consistent with a PAG: `o->` becomes `->`, the
/// `o-o` part is oriented along a maximum cardinality search order, and any
/// inconsistency left by an imperfect PAG is repaired so the result is a
/// bow-free MAG.
pub fn pag_to_mag(pag: &Pag) -> Result<Admg> {
    let d = pag.d();
    let mut directed: Vec<(usize, usize)> = Vec::new();
    let mut bidirected: Vec<(usize, usize)> = Vec::new();
    let mut circle_adj = vec![false; d * d];
    for (i, j, mi, mj) in pag.edges() {
        match (mi, mj) {
            (Mark::Arrow, Mark::Arrow) => bidirected.push((i, j)),
            (Mark::Circle, Mark::Circle) => {
                circle_adj[i * d + j] = true;
                circle_adj[j * d + i] = true;
            }
            (_, Mark::Arrow) => directed.push((i, j)),
            (Mark::Arrow, _) => directed.push((j, i)),
            // Tails against circles only arise from selection; orient toward
            // the circle.
            (Mark::Tail, _) => directed.push((i, j)),
            (_, Mark::Tail) => directed.push((j, i)),
            _ => {}
        }
    }
    let rank = max_cardinality_order(d, &circle_adj);
    for i in 0..d {
        for j in (i + 1)..d {
            if circle_adj[i * d + j] {
                if rank[i] < rank[j] {
                    directed.push((i, j));
                } else {
                    directed.push((j, i));
                }
            }
        }
    }

    let mut g = Admg::empty(d);
    for &(i, j) in &directed {
        // Reverse any edge that would close a directed cycle.
        if g.ancestors_of(&[i])[j] {
            g.add_directed(j, i);
        } else {
            g.add_directed(i, j);
        }
    }
    for &(i, j) in &bidirected {
        g.add_bidirected(i, j);
    }
    // Bidirected edges between ancestors become directed; each change only
    // follows an existing ancestral relation, so no cycle appears.
    loop {
        let anc = g.proper_ancestor_matrix();
        let bad = g.bidirected_edges().into_iter().find(|&(i, j)| anc[i * d + j] || anc[j * d + i]);
        let Some((i, j)) = bad else { break };
        g.remove_bidirected(i, j);
        if anc[i * d + j] {
            g.add_directed(i, j);
        } else {
            g.add_directed(j, i);
        }
    }
    maximal_ancestral_projection(&g)
}

/// Rank of each node in a maximum cardinality search over `adj`, ties
/// broken by lowest index.
fn max_cardinality_order(d: usize, adj: &[bool]) -> Vec<usize> {
    let mut rank = vec![usize::MAX; d];
    let mut weight = vec![0usize; d];
    for step in 0..d {
        let v = (0..d)
            .filter(|&v| rank[v] == usize::MAX)
            .max_by(|&a, &b| weight[a].cmp(&weight[b]).then(b.cmp(&a)))
            .expect("unranked node remains");
        rank[v] = step;
        for w in 0..d {
            if adj[v * d + w] && rank[w] == usize::MAX {
                weight[w] += 1;
            }
        }
    }
    rank
}
