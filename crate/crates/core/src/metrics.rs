//! Evaluation measures on PAGs and skeleton posteriors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Mark, Pag, Skeleton};
use crate::posterior::SkeletonPosterior;

/// Confusion counts for one endpoint or adjacency class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub f1: f64,
    pub tpr: f64,
    pub fdr: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// Truth has no positives, so `tpr` is reported as 0.
    pub no_truth: bool,
    /// Nothing was predicted, so `fdr` is reported as 0.
    pub no_prediction: bool,
}

impl Rates {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let no_truth = tp + fn_ == 0;
        let no_prediction = tp + fp == 0;
        if no_truth && no_prediction {
            // Nothing to find and nothing claimed: agreement is perfect.
            return Self {
                f1: 1.0,
                tpr: 1.0,
                fdr: 0.0,
                no_truth,
                no_prediction,
                ..Self::default()
            };
        }
        let tpr = if no_truth { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let fdr = if no_prediction { 0.0 } else { fp as f64 / (tp + fp) as f64 };
        let precision = 1.0 - fdr;
        let f1 = if tp == 0 { 0.0 } else { 2.0 * precision * tpr / (precision + tpr) };
        Self {
            f1,
            tpr,
            fdr,
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            no_truth,
            no_prediction,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PagMetrics {
    pub skeleton: Rates,
    pub arrowhead: Rates,
    pub tail: Rates,
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch { expected: b, got: a });
    }
    Ok(())
}

/// Skeleton metrics over unordered pairs; arrowhead and tail metrics over
/// ordered endpoint positions. Circles count as neither.
pub fn pag_metrics(predicted: &Pag, truth: &Pag) -> Result<PagMetrics> {
    check_dims(predicted.d(), truth.d())?;
    let d = truth.d();
    let mut adj = (0, 0, 0);
    let mut arrow = (0, 0, 0);
    let mut tail = (0, 0, 0);
    let tally = |c: &mut (usize, usize, usize), p: bool, t: bool| match (p, t) {
        (true, true) => c.0 += 1,
        (true, false) => c.1 += 1,
        (false, true) => c.2 += 1,
        _ => {}
    };
    for i in 0..d {
        for j in 0..d {
            if i == j {
                continue;
            }
            let (pm, tm) = (predicted.mark(i, j), truth.mark(i, j));
            if i < j {
                tally(&mut adj, pm != Mark::None, tm != Mark::None);
            }
            tally(&mut arrow, pm == Mark::Arrow, tm == Mark::Arrow);
            tally(&mut tail, pm == Mark::Tail, tm == Mark::Tail);
        }
    }
    Ok(PagMetrics {
        skeleton: Rates::from_counts(adj.0, adj.1, adj.2),
        arrowhead: Rates::from_counts(arrow.0, arrow.1, arrow.2),
        tail: Rates::from_counts(tail.0, tail.1, tail.2),
    })
}

pub fn skeleton_rates(predicted: &Skeleton, truth: &Skeleton) -> Result<Rates> {
    check_dims(predicted.d(), truth.d())?;
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for i in 0..truth.d() {
        for j in (i + 1)..truth.d() {
            match (predicted.adjacent(i, j), truth.adjacent(i, j)) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
    }
    Ok(Rates::from_counts(tp, fp, fn_))
}

/// Number of unordered pairs whose edge or mark pair differs.
pub fn shd(predicted: &Pag, truth: &Pag) -> Result<usize> {
    check_dims(predicted.d(), truth.d())?;
    let d = truth.d();
    let mut count = 0;
    for i in 0..d {
        for j in (i + 1)..d {
            if predicted.mark(i, j) != truth.mark(i, j) || predicted.mark(j, i) != truth.mark(j, i) {
                count += 1;
            }
        }
    }
    Ok(count)
}

pub const KL_CLAMP: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorQuality {
    /// `None` when the truth has a single class.
    pub auroc: Option<f64>,
    pub auprc: Option<f64>,
    pub kl: f64,
}

/// Pair scores and labels in row-major `i < j` order.
pub fn pair_scores(posterior: &SkeletonPosterior, truth: &Skeleton) -> Result<(Vec<f64>, Vec<bool>)> {
    check_dims(posterior.d(), truth.d())?;
    let d = truth.d();
    let mut scores = Vec::with_capacity(d * d.saturating_sub(1) / 2);
    let mut labels = Vec::with_capacity(scores.capacity());
    for i in 0..d {
        for j in (i + 1)..d {
            scores.push(posterior.get(i, j));
            labels.push(truth.adjacent(i, j));
        }
    }
    Ok((scores, labels))
}

/// Mann-Whitney statistic with mid-ranks for ties.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut k = 0;
    while k < order.len() {
        let mut end = k;
        while end + 1 < order.len() && scores[order[end + 1]] == scores[order[k]] {
            end += 1;
        }
        let mid = (k + end) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[k..=end].iter().filter(|&&o| labels[o]).count() as f64;
        k = end + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Average precision; tied scores enter the ranking as one block.
pub fn auprc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == labels.len() {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut seen, mut ap) = (0usize, 0usize, 0.0);
    let mut k = 0;
    while k < order.len() {
        let mut end = k;
        while end + 1 < order.len() && scores[order[end + 1]] == scores[order[k]] {
            end += 1;
        }
        let block_tp = order[k..=end].iter().filter(|&&o| labels[o]).count();
        tp += block_tp;
        seen += end - k + 1;
        ap += block_tp as f64 / pos as f64 * (tp as f64 / seen as f64);
        k = end + 1;
    }
    Some(ap)
}

/// Mean Bernoulli KL from the 0/1 truth to the clamped posterior.
pub fn mean_kl(scores: &[f64], labels: &[bool]) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(&p, &l)| {
            let q = p.clamp(KL_CLAMP, 1.0 - KL_CLAMP);
            if l {
                -q.ln()
            } else {
                -(1.0 - q).ln()
            }
        })
        .sum();
    total / scores.len() as f64
}

pub fn posterior_quality(posterior: &SkeletonPosterior, truth: &Skeleton) -> Result<PosteriorQuality> {
    let (scores, labels) = pair_scores(posterior, truth)?;
    Ok(PosteriorQuality {
        auroc: auroc(&scores, &labels),
        auprc: auprc(&scores, &labels),
        kl: mean_kl(&scores, &labels),
    })
}
