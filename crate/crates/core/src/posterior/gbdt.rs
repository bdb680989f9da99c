//! Histogram gradient-boosted trees for binary log-loss, plus logistic
//! calibration of their margins.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// Minimum number of rows in each child of a split.
    pub min_leaf: usize,
    pub l2: f64,
    pub n_bins: usize,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        Self {
            n_trees: 120,
            max_depth: 4,
            learning_rate: 0.1,
            min_leaf: 20,
            l2: 1.0,
            n_bins: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    k = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Booster {
    pub n_features: usize,
    /// Starting margin used when no external margin is supplied.
    pub base_margin: f64,
    pub trees: Vec<Tree>,
    /// Mean training log-loss after each round (index 0 = before any tree).
    pub train_loss: Vec<f64>,
}

pub fn sigmoid(m: f64) -> f64 {
    if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

/// Mean binary cross-entropy of soft targets `y` against margins.
pub fn log_loss(margins: &[f64], y: &[f64]) -> f64 {
    let total: f64 = margins
        .iter()
        .zip(y)
        .map(|(&m, &t)| {
            // -t ln s(m) - (1-t) ln(1 - s(m)), written stably.
            let softplus = if m > 0.0 { m + (-m).exp().ln_1p() } else { m.exp().ln_1p() };
            softplus - t * m
        })
        .sum();
    total / margins.len().max(1) as f64
}

/// Quantile cut points per feature; `x <= cuts[b]` means bin `<= b`.
fn quantile_cuts(x: &[Vec<f64>], feature: usize, n_bins: usize) -> Vec<f64> {
    let mut col: Vec<f64> = x.iter().map(|r| r[feature]).collect();
    col.sort_by(f64::total_cmp);
    col.dedup();
    if col.len() <= n_bins {
        // Midpoints between distinct values.
        return col.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0).collect();
    }
    let mut cuts: Vec<f64> = (1..n_bins).map(|b| col[b * col.len() / n_bins]).collect();
    cuts.dedup();
    // The largest value must fall right of every cut.
    cuts.retain(|&c| c < col[col.len() - 1]);
    cuts
}

struct Split {
    gain: f64,
    feature: usize,
    bin: usize,
}

struct Grower<'a> {
    bins: &'a [Vec<u8>],
    cuts: &'a [Vec<f64>],
    grad: &'a [f64],
    hess: &'a [f64],
    cfg: &'a GbdtConfig,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn leaf_value(&self, rows: &[usize]) -> f64 {
        let g: f64 = rows.iter().map(|&r| self.grad[r]).sum();
        let h: f64 = rows.iter().map(|&r| self.hess[r]).sum();
        -g / (h + self.cfg.l2) * self.cfg.learning_rate
    }

    fn best_split(&self, rows: &[usize]) -> Option<Split> {
        let g_tot: f64 = rows.iter().map(|&r| self.grad[r]).sum();
        let h_tot: f64 = rows.iter().map(|&r| self.hess[r]).sum();
        let lambda = self.cfg.l2;
        let parent = g_tot * g_tot / (h_tot + lambda);
        let min_leaf = self.cfg.min_leaf.max(1);
        let per_feature: Vec<Option<Split>> = (0..self.cuts.len())
            .into_par_iter()
            .map(|f| {
                let nb = self.cuts[f].len() + 1;
                if nb < 2 {
                    return None;
                }
                let mut hg = vec![0.0; nb];
                let mut hh = vec![0.0; nb];
                let mut hc = vec![0usize; nb];
                for &r in rows {
                    let b = self.bins[f][r] as usize;
                    hg[b] += self.grad[r];
                    hh[b] += self.hess[r];
                    hc[b] += 1;
                }
                let (mut gl, mut hl, mut cl) = (0.0, 0.0, 0usize);
                let mut best: Option<Split> = None;
                for b in 0..nb - 1 {
                    gl += hg[b];
                    hl += hh[b];
                    cl += hc[b];
                    let cr = rows.len() - cl;
                    if cl < min_leaf || cr < min_leaf {
                        continue;
                    }
                    let (gr, hr) = (g_tot - gl, h_tot - hl);
                    let gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent;
                    if gain > 1e-12 && best.as_ref().map_or(true, |s| gain > s.gain) {
                        best = Some(Split { gain, feature: f, bin: b });
                    }
                }
                best
            })
            .collect();
        // Strictly better gain wins; ties go to the lower feature index.
        per_feature.into_iter().flatten().fold(None, |acc: Option<Split>, s| match acc {
            Some(a) if a.gain >= s.gain => Some(a),
            _ => Some(s),
        })
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0 });
        let split = if depth < self.cfg.max_depth { self.best_split(&rows) } else { None };
        match split {
            None => {
                self.nodes[id] = Node::Leaf { value: self.leaf_value(&rows) };
            }
            Some(s) => {
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&row| self.bins[s.feature][row] as usize <= s.bin);
                let left = self.grow(l, depth + 1);
                let right = self.grow(r, depth + 1);
                self.nodes[id] = Node::Split {
                    feature: s.feature,
                    threshold: self.cuts[s.feature][s.bin],
                    left,
                    right,
                };
            }
        }
        id
    }
}

impl Booster {
    /// Fits soft targets `y` in `[0, 1]`. With `base`, boosting starts from
    /// those per-row margins instead of a fitted constant.
    pub fn fit(x: &[Vec<f64>], y: &[f64], base: Option<&[f64]>, cfg: &GbdtConfig) -> Result<Self> {
        let n = x.len();
        if n == 0 || y.len() != n {
            return Err(Error::InvalidInput("boosting needs a non-empty, aligned training set".into()));
        }
        if cfg.n_bins < 2 || cfg.n_bins > 256 || !(cfg.learning_rate > 0.0) {
            return Err(Error::InvalidInput("invalid boosting configuration".into()));
        }
        if let Some(b) = base {
            if b.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: b.len() });
            }
        }
        let n_features = x[0].len();
        if x.iter().any(|r| r.len() != n_features) {
            return Err(Error::InvalidInput("ragged feature rows".into()));
        }
        if y.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::InvalidInput("targets must lie in [0, 1]".into()));
        }
        let cuts: Vec<Vec<f64>> = (0..n_features).map(|f| quantile_cuts(x, f, cfg.n_bins)).collect();
        let bins: Vec<Vec<u8>> = (0..n_features)
            .map(|f| x.iter().map(|r| cuts[f].partition_point(|&c| c < r[f]) as u8).collect())
            .collect();

        let mean = y.iter().sum::<f64>() / n as f64;
        let base_margin = logit(mean);
        let mut margins: Vec<f64> = match base {
            Some(b) => b.to_vec(),
            None => vec![base_margin; n],
        };
        let mut train_loss = vec![log_loss(&margins, y)];
        let mut trees = Vec::with_capacity(cfg.n_trees);
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        for _ in 0..cfg.n_trees {
            for r in 0..n {
                let p = sigmoid(margins[r]);
                grad[r] = p - y[r];
                hess[r] = (p * (1.0 - p)).max(1e-12);
            }
            let mut grower = Grower {
                bins: &bins,
                cuts: &cuts,
                grad: &grad,
                hess: &hess,
                cfg,
                nodes: Vec::new(),
            };
            grower.grow((0..n).collect(), 0);
            let tree = Tree { nodes: grower.nodes };
            for r in 0..n {
                margins[r] += tree.predict(&x[r]);
            }
            train_loss.push(log_loss(&margins, y));
            trees.push(tree);
        }
        Ok(Self {
            n_features,
            base_margin,
            trees,
            train_loss,
        })
    }

    /// Sum of tree outputs on top of `base` (or the fitted constant).
    pub fn margin(&self, x: &[f64], base: Option<f64>) -> f64 {
        base.unwrap_or(self.base_margin) + self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    /// Margin using only the first `rounds` trees.
    pub fn margin_truncated(&self, x: &[f64], base: Option<f64>, rounds: usize) -> f64 {
        base.unwrap_or(self.base_margin) + self.trees.iter().take(rounds).map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn truncate(&mut self, rounds: usize) {
        self.trees.truncate(rounds);
        self.train_loss.truncate(rounds + 1);
    }
}

/// `sigmoid(a * margin + b)` fitted by Newton's method on hard labels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Platt {
    pub a: f64,
    pub b: f64,
}

impl Default for Platt {
    fn default() -> Self {
        Self { a: 1.0, b: 0.0 }
    }
}

impl Platt {
    pub fn fit(margins: &[f64], labels: &[bool]) -> Self {
        let pos = labels.iter().filter(|&&l| l).count();
        if margins.is_empty() || pos == 0 || pos == labels.len() {
            return Self::default();
        }
        // Targets shrunk toward the prior as in the original recipe.
        let (np, nn) = (pos as f64, (labels.len() - pos) as f64);
        let hi = (np + 1.0) / (np + 2.0);
        let lo = 1.0 / (nn + 2.0);
        let t: Vec<f64> = labels.iter().map(|&l| if l { hi } else { lo }).collect();
        let mut ab = [1.0, 0.0];
        let loss = |ab: [f64; 2]| -> f64 {
            let m: Vec<f64> = margins.iter().map(|&m| ab[0] * m + ab[1]).collect();
            log_loss(&m, &t)
        };
        let mut current = loss(ab);
        for _ in 0..100 {
            let (mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 1e-9, 0.0, 1e-9);
            for (&m, &ti) in margins.iter().zip(&t) {
                let p = sigmoid(ab[0] * m + ab[1]);
                let r = p - ti;
                let w = p * (1.0 - p);
                g0 += r * m;
                g1 += r;
                h00 += w * m * m;
                h01 += w * m;
                h11 += w;
            }
            let det = h00 * h11 - h01 * h01;
            if det.abs() < 1e-300 {
                break;
            }
            let step = [(h11 * g0 - h01 * g1) / det, (h00 * g1 - h01 * g0) / det];
            let mut scale = 1.0;
            let mut improved = false;
            for _ in 0..30 {
                let cand = [ab[0] - scale * step[0], ab[1] - scale * step[1]];
                let l = loss(cand);
                if l <= current {
                    ab = cand;
                    improved = current - l > 1e-14 * current.abs().max(1.0);
                    current = l;
                    break;
                }
                scale *= 0.5;
            }
            if !improved {
                break;
            }
        }
        Self { a: ab[0], b: ab[1] }
    }

    pub fn apply(&self, margin: f64) -> f64 {
        sigmoid(self.a * margin + self.b)
    }
}
