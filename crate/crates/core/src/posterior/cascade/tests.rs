use std::sync::OnceLock;

use super::*;
use crate::metrics::{posterior_quality, skeleton_rates};
use crate::scm::{generate_corpus, GraphSamplerConfig};

fn small_config() -> CascadeConfig {
    CascadeConfig {
        gbdt: GbdtConfig { n_trees: 60, ..GbdtConfig::default() },
        seed: 3,
        ..CascadeConfig::default()
    }
}

fn corpus(count: usize, seed: u64) -> Vec<(Dataset, Skeleton)> {
    generate_corpus(count, &GraphSamplerConfig::new(12, seed), Some((10, 16)), 500).unwrap()
}

fn trained() -> &'static (CascadeModel, TrainReport) {
    static MODEL: OnceLock<(CascadeModel, TrainReport)> = OnceLock::new();
    MODEL.get_or_init(|| train_cascade(&corpus(40, 1), &small_config()).unwrap())
}

#[test]
fn rejects_empty_corpus() {
    assert!(train_cascade(&[], &CascadeConfig::default()).is_err());
}

#[test]
fn empty_graphs_stay_at_the_smoothing_floor() {
    let mut cfg = GraphSamplerConfig::new(6, 2);
    cfg.indegree_range = (0.0, 0.0);
    cfg.bidirected_fraction_range = (0.0, 0.0);
    let corpus = generate_corpus(6, &cfg, None, 200).unwrap();
    assert!(corpus.iter().all(|(_, s)| s.edge_count() == 0));
    let (model, _) = train_cascade(&corpus, &small_config()).unwrap();
    assert!(model.stages.iter().all(|s| s.degenerate));
    let post = infer_posterior(&model, &corpus[0].0).unwrap();
    for i in 0..6 {
        for j in 0..6 {
            assert!(post.get(i, j) <= 0.025 + 1e-9);
        }
    }
}

#[test]
fn ranks_held_out_pairs_and_favors_recall() {
    let (model, report) = trained();
    assert_eq!(report.stage_rows.len(), 3);
    let test = corpus(12, 99);
    let mut auc = 0.0;
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (data, truth) in &test {
        let post = infer_posterior(model, data).unwrap();
        auc += posterior_quality(&post, truth).unwrap().auroc.unwrap();
        let r = skeleton_rates(&post.skeleton_at(model.decision_threshold), truth).unwrap();
        tp += r.true_positives;
        fp += r.false_positives;
        fn_ += r.false_negatives;
    }
    assert!(auc / test.len() as f64 > 0.9, "auroc {}", auc / test.len() as f64);
    assert!(fn_ <= fp, "tp {tp} fp {fp} fn {fn_}");
}

#[test]
fn strongly_dependent_pair() {
    let (model, _) = trained();
    let mut p = crate::scm::ScmParams::zeros(2);
    p.delta[(0, 1)] = 1.5;
    p.beta = DMatrix::identity(2, 2);
    let data = crate::scm::sample_dataset(&p, 500, &mut rng::seeded(4)).unwrap();
    assert!(infer_posterior(model, &data).unwrap().get(0, 1) > 0.9);
}

#[test]
fn posterior_is_permutation_equivariant_and_valid() {
    let (model, _) = trained();
    let (data, _) = &corpus(1, 7)[0];
    let d = data.d();
    let perm: Vec<usize> = (0..d).map(|v| (v * 5 + 3) % d).collect();
    let mut sorted = perm.clone();
    sorted.sort_unstable();
    if sorted != (0..d).collect::<Vec<_>>() {
        return;
    }
    let a = infer_posterior(model, data).unwrap();
    let b = infer_posterior(model, &data.permuted_columns(&perm)).unwrap();
    assert_eq!(a.permuted(&perm), b);
    assert_eq!(SkeletonPosterior::from_matrix(a.matrix().clone()).unwrap(), a);
}

#[test]
fn retraining_is_deterministic_and_round_trips() {
    let small = corpus(8, 5);
    let cfg = CascadeConfig { gbdt: GbdtConfig { n_trees: 10, ..GbdtConfig::default() }, ..small_config() };
    let (a, _) = train_cascade(&small, &cfg).unwrap();
    let (b, _) = train_cascade(&small, &cfg).unwrap();
    assert_eq!(a, b);
    let back = CascadeModel::from_json(&a.to_json().unwrap()).unwrap();
    assert_eq!(back, a);
    let mut old = a.clone();
    old.schema_version = FEATURE_SCHEMA_VERSION + 1;
    assert!(matches!(CascadeModel::from_json(&old.to_json().unwrap()), Err(Error::SchemaMismatch { .. })));
    assert!(matches!(infer_posterior(&old, &small[0].0), Err(Error::SchemaMismatch { .. })));
}
