use super::*;
use crate::rng;
use crate::scm::{implied_covariance, parameterize_scm, sample_dataset};
use proptest::prelude::*;
use rand::Rng as _;

fn random_pair(d: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut r = rng::seeded(seed);
    let mut delta = DMatrix::from_fn(d, d, |_, _| r.gen_range(-0.8..0.8));
    delta.fill_diagonal(0.0);
    let mut beta = DMatrix::from_fn(d, d, |_, _| r.gen_range(-0.8..0.8));
    beta = (&beta + beta.transpose()) * 0.5;
    for i in 0..d {
        beta[(i, i)] = 1.0 + r.gen::<f64>();
    }
    (delta, beta)
}

fn support_matrices(g: &Admg) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = g.d();
    let delta = DMatrix::from_fn(d, d, |i, j| if g.has_directed(i, j) { 1.0 } else { 0.0 });
    let beta = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else if g.has_bidirected(i, j) { 1.0 } else { 0.0 });
    (delta, beta)
}

#[test]
fn h_reference_values() {
    assert_eq!(h_admg(&DMatrix::zeros(3, 3), &DMatrix::zeros(3, 3)), 0.0);
    let delta = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let h = h_admg(&delta, &DMatrix::zeros(2, 2));
    assert!((h - (2.0 * 1f64.cosh() - 2.0)).abs() < 1e-12);
    assert!((h - 1.0862).abs() < 1e-4);
    let delta = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
    let beta = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    assert!((h_admg(&delta, &beta) - 1.0).abs() < 1e-12);
}

#[test]
fn gradient_vanishes_at_origin() {
    let (gd, gb) = h_admg_gradient(&DMatrix::zeros(4, 4), &DMatrix::zeros(4, 4));
    assert_eq!(gd, DMatrix::zeros(4, 4));
    assert_eq!(gb, DMatrix::zeros(4, 4));
}

fn central_difference(f: impl Fn(&DMatrix<f64>, &DMatrix<f64>) -> f64, delta: &DMatrix<f64>, beta: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = delta.nrows();
    let eps = 1e-6;
    let mut gd = DMatrix::zeros(d, d);
    let mut gb = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            if i == j {
                continue;
            }
            let (mut a, mut b) = (delta.clone(), delta.clone());
            a[(i, j)] += eps;
            b[(i, j)] -= eps;
            gd[(i, j)] = (f(&a, beta) - f(&b, beta)) / (2.0 * eps);
            let (mut a, mut b) = (beta.clone(), beta.clone());
            a[(i, j)] += eps;
            a[(j, i)] += eps;
            b[(i, j)] -= eps;
            b[(j, i)] -= eps;
            gb[(i, j)] = (f(delta, &a) - f(delta, &b)) / (2.0 * eps);
        }
    }
    (gd, gb)
}

fn assert_close(a: &DMatrix<f64>, b: &DMatrix<f64>, rel: f64) {
    for (x, y) in a.iter().zip(b.iter()) {
        let scale = x.abs().max(y.abs()).max(1e-3);
        assert!((x - y).abs() / scale < rel, "{x} vs {y}");
    }
}

#[test]
fn h_gradient_matches_finite_differences() {
    for seed in 0..20 {
        let (delta, beta) = random_pair(4, seed);
        let (gd, gb) = h_admg_gradient(&delta, &beta);
        let (nd, nb) = central_difference(h_admg, &delta, &beta);
        assert_close(&gd, &nd, 1e-5);
        assert_close(&gb, &nb, 1e-5);
        assert_eq!(gb.clone(), gb.transpose());
    }
}

#[test]
fn objective_gradient_matches_finite_differences() {
    let g = Admg::from_edges(4, &[(0, 1), (1, 2)], &[(2, 3)]).unwrap();
    let p = parameterize_scm(&g, &mut rng::seeded(3)).unwrap();
    let ds = sample_dataset(&p, 500, &mut rng::seeded(4)).unwrap();
    let s = ds.covariance();
    let (mut delta, beta) = random_pair(4, 5);
    delta *= 0.5;
    let loss = PseudoLoss::new(&s, &ScmParams { delta: delta.clone(), beta: beta.clone() }).unwrap();
    let alm = AlmState { alpha: 0.7, rho: 3.0, t: 1, h_value: 0.0 };
    let cfg = AbicConfig { lambda: 0.0, ..AbicConfig::default() };
    let obj = objective(&delta, &beta, &loss, &alm, &cfg).unwrap();
    let f = |a: &DMatrix<f64>, b: &DMatrix<f64>| objective(a, b, &loss, &alm, &cfg).unwrap().value;
    let (nd, nb) = central_difference(f, &delta, &beta);
    let mut gb = obj.grad_beta.clone();
    gb.fill_diagonal(0.0);
    assert_close(&obj.grad_delta, &nd, 1e-5);
    assert_close(&gb, &nb, 1e-5);
}

#[test]
fn data_gradient_vanishes_at_population_truth() {
    let g = Admg::from_edges(4, &[(0, 1), (1, 2), (0, 3)], &[(2, 3)]).unwrap();
    let p = parameterize_scm(&g, &mut rng::seeded(8)).unwrap();
    let sigma = implied_covariance(&p).unwrap();
    let loss = PseudoLoss::new(&sigma, &p).unwrap();
    let mut gd = DMatrix::zeros(4, 4);
    let mut gb = DMatrix::zeros(4, 4);
    loss.evaluate(&p.delta, &p.beta, Some((&mut gd, &mut gb)));
    // Stationary along the free coordinates of the generating graph.
    for (i, j) in g.directed_edges() {
        assert!(gd[(i, j)].abs() < 1e-10, "{gd}");
    }
    for (i, j) in g.bidirected_edges() {
        assert!(gb[(i, j)].abs() < 1e-10, "{gb}");
    }
    for i in 0..4 {
        assert!((loss.node_variance(i, &p.delta, &p.beta) - p.beta[(i, i)]).abs() < 1e-10);
    }
}

#[test]
fn lambda_term_is_exact_and_gradient_descends() {
    let (delta, beta) = random_pair(3, 9);
    let s = DMatrix::identity(3, 3);
    let loss = PseudoLoss::new(&s, &ScmParams { delta: delta.clone(), beta: beta.clone() }).unwrap();
    let alm = AlmState { alpha: 0.0, rho: 1.0, t: 1, h_value: 0.0 };
    let a = objective(&delta, &beta, &loss, &alm, &AbicConfig { lambda: 0.0, ..AbicConfig::default() }).unwrap();
    let b = objective(&delta, &beta, &loss, &alm, &AbicConfig { lambda: 0.3, ..AbicConfig::default() }).unwrap();
    let mut l1 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                l1 += delta[(i, j)].abs() + beta[(i, j)].abs();
            }
        }
    }
    assert!((b.value - a.value - 0.3 * l1).abs() < 1e-12);
    let step = 1e-4;
    let mut bs = &beta - &b.grad_beta * step;
    for i in 0..3 {
        bs[(i, i)] = beta[(i, i)];
    }
    let moved = objective(&(&delta - &b.grad_delta * step), &bs, &loss, &alm, &AbicConfig { lambda: 0.3, ..AbicConfig::default() }).unwrap();
    assert!(moved.value < b.value);
}

#[test]
fn thresholding_extremes() {
    let g = Admg::from_edges(3, &[(0, 1)], &[(1, 2)]).unwrap();
    let p = parameterize_scm(&g, &mut rng::seeded(1)).unwrap();
    assert_eq!(threshold_to_admg(&p, f64::INFINITY).edge_count(), 0);
    assert_eq!(threshold_to_admg(&p, 0.0), g);
}

#[test]
fn single_variable_gives_empty_graph() {
    let ds = Dataset::with_default_names(DMatrix::from_fn(30, 1, |r, _| (r as f64).sin())).unwrap();
    let fit = abic_fit(&ds, &AbicConfig::default(), None).unwrap();
    assert_eq!(fit.graph.edge_count(), 0);
}

#[test]
fn recovers_two_node_chain() {
    let mut p = ScmParams::zeros(2);
    p.delta[(0, 1)] = 1.5;
    p.beta = DMatrix::identity(2, 2);
    let ds = sample_dataset(&p, 1000, &mut rng::seeded(2)).unwrap();
    let fit = abic_fit(&ds, &AbicConfig::default(), None).unwrap();
    assert!(fit.graph.adjacent(0, 1));
    assert!(fit.graph.bidirected_edges().is_empty());
    assert!(fit.final_h < 1e-8);
    // Scale asymmetry favors the causal direction in raw units.
    assert!(fit.graph.has_directed(0, 1));
}

#[test]
fn fit_is_deterministic_and_ancestral() {
    let mut cfg = crate::scm::GraphSamplerConfig::new(8, 4);
    cfg.indegree_range = (1.0, 1.5);
    let inst = crate::scm::simulate_instance(&cfg, 300).unwrap();
    let abic = AbicConfig { alm_steps: 6, inner_steps: 3, ..AbicConfig::default() };
    let a = abic_fit(&inst.data, &abic, None).unwrap();
    let b = abic_fit(&inst.data, &abic, None).unwrap();
    assert_eq!(a.trace, b.trace);
    assert!(a.graph.is_ancestral());
    let mut buf = Vec::new();
    write_trace(&a.trace, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), a.trace.len());
}

#[test]
fn skeleton_mask_keeps_exact_adjacencies() {
    let mut cfg = crate::scm::GraphSamplerConfig::new(8, 6);
    cfg.indegree_range = (1.0, 1.5);
    let inst = crate::scm::simulate_instance(&cfg, 400).unwrap();
    let sk = inst.graph.skeleton();
    let abic = AbicConfig { alm_steps: 6, inner_steps: 3, ..AbicConfig::default() };
    let fit = abic_fit_with(&inst.data, &abic, FitOptions { skeleton: Some(&sk), ..FitOptions::default() }).unwrap();
    assert_eq!(fit.graph.skeleton(), sk);
    assert!(fit.graph.is_ancestral());
}

#[test]
fn fallback_threshold_restores_ancestrality() {
    let mut p = ScmParams::zeros(3);
    p.delta[(0, 1)] = 0.9;
    p.delta[(1, 2)] = 0.2;
    p.beta = DMatrix::identity(3, 3);
    p.beta[(0, 2)] = 0.5;
    p.beta[(2, 0)] = 0.5;
    let (g, used) = ancestral_threshold(&p, &AbicConfig::default(), None);
    assert!(g.is_ancestral());
    assert_eq!(used, 0.2);
    assert!(g.has_directed(0, 1) && g.has_bidirected(0, 2) && !g.has_directed(1, 2));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn h_zero_set_is_ancestrality(d in 2usize..=8, bits in prop::collection::vec(0u8..6, 64)) {
        let mut g = Admg::empty(d);
        let mut k = 0;
        for i in 0..d {
            for j in (i + 1)..d {
                match bits[k % bits.len()] {
                    0 => g.add_directed(i, j),
                    1 => g.add_directed(j, i),
                    2 => g.add_bidirected(i, j),
                    3 => { g.add_directed(i, j); g.add_bidirected(i, j); }
                    _ => {}
                }
                k += 1;
            }
        }
        let (delta, beta) = support_matrices(&g);
        let h = h_admg(&delta, &beta);
        prop_assert_eq!(h.abs() <= 1e-8, g.is_ancestral(), "h = {}", h);
    }
}
