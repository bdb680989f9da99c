use super::*;
use crate::abic::abic_fit;
use crate::rng;
use crate::scm::{simulate_instance, GraphSamplerConfig};
use proptest::prelude::*;

#[test]
fn acceptance_reference_values() {
    assert_eq!(accept_probability(0.9, 0, 0.1), 1.0);
    assert!((accept_probability(0.15, 0, 0.1) - 0.25).abs() < 1e-15);
    assert!((accept_probability(0.15, 3, 0.1) - 0.5f64.sqrt()).abs() < 1e-15);
    assert_eq!(accept_probability(0.0, 0, 0.0), 0.0);
    assert_eq!(accept_probability(0.95, 7, 0.3), 1.0);
}

fn one_pair_layout(d: usize) -> Layout {
    Layout {
        d,
        delta: vec![(0, 1)],
        beta: vec![],
    }
}

/// Acceptance frequency over `draws` steps for a strengthening proposal.
fn acceptance_frequency(p: f64, t: usize, c: f64, draws: usize) -> f64 {
    let mut post = DMatrix::zeros(2, 2);
    post[(0, 1)] = p;
    post[(1, 0)] = p;
    let posterior = SkeletonPosterior::from_matrix(post).unwrap();
    let layout = one_pair_layout(2);
    let current = ScmParams::zeros(2);
    let zeros = DMatrix::zeros(2, 2);
    let cfg = GuideConfig { c, sparsity_unconditional: true, seed: 99 };
    let mut hits = 0;
    for k in 0..draws {
        let mut proposed = current.clone();
        proposed.delta[(0, 1)] = 0.8;
        let step = StepContext { t_outer: t, t_inner: k };
        hits += posterior_guided_update(&current, &mut proposed, (&zeros, &zeros), &posterior, &layout, step, &cfg);
    }
    hits as f64 / draws as f64
}

#[test]
fn monte_carlo_frequency_matches_probability() {
    for (p, t) in [(0.15, 0), (0.15, 3), (0.4, 1)] {
        let freq = acceptance_frequency(p, t, 0.1, 100_000);
        let expected = accept_probability(p, t, 0.1);
        assert!((freq - expected).abs() < 0.005, "p={p} t={t}: {freq} vs {expected}");
    }
}

#[test]
fn zero_probability_never_strengthens() {
    assert_eq!(acceptance_frequency(0.0, 0, 0.0, 2000), 0.0);
}

#[test]
fn shrinking_coordinates_pass_when_unconditional() {
    let posterior = SkeletonPosterior::constant(3, 0.0).unwrap();
    let layout = Layout::new(3, None);
    let mut current = ScmParams::zeros(3);
    current.delta[(0, 1)] = 0.5;
    current.beta[(1, 2)] = -0.4;
    current.beta[(2, 1)] = -0.4;
    // Gradient points away from zero, so descent shrinks both.
    let mut gd = DMatrix::zeros(3, 3);
    gd[(0, 1)] = 1.0;
    let mut gb = DMatrix::zeros(3, 3);
    gb[(1, 2)] = -1.0;
    gb[(2, 1)] = -1.0;
    let mut proposed = ScmParams::zeros(3);
    proposed.delta[(2, 0)] = 0.9;
    let step = StepContext { t_outer: 0, t_inner: 0 };
    let mut cfg = GuideConfig { c: 0.0, sparsity_unconditional: true, seed: 1 };
    let mut out = proposed.clone();
    posterior_guided_update(&current, &mut out, (&gd, &gb), &posterior, &layout, step, &cfg);
    assert_eq!(out.delta[(0, 1)], 0.0);
    assert_eq!(out.beta[(1, 2)], 0.0);
    assert_eq!(out.beta[(2, 1)], 0.0);
    assert_eq!(out.delta[(2, 0)], 0.0, "strengthening move rejected at p = 0");

    cfg.sparsity_unconditional = false;
    let mut out = proposed.clone();
    posterior_guided_update(&current, &mut out, (&gd, &gb), &posterior, &layout, step, &cfg);
    assert_eq!(out.delta[(0, 1)], 0.5);
    assert_eq!(out.beta[(1, 2)], -0.4);
    assert_eq!(out.beta[(2, 1)], -0.4);
}

#[test]
fn all_ones_posterior_reproduces_plain_trace() {
    let mut cfg = GraphSamplerConfig::new(8, 21);
    cfg.indegree_range = (1.0, 1.5);
    let inst = simulate_instance(&cfg, 300).unwrap();
    let abic = AbicConfig { alm_steps: 5, inner_steps: 3, ..AbicConfig::default() };
    let plain = abic_fit(&inst.data, &abic, None).unwrap();
    let ones = SkeletonPosterior::constant(8, 1.0).unwrap();
    let guided = spot_fit(&inst.data, &ones, &abic, &GuideConfig { c: 0.0, sparsity_unconditional: true, seed: 5 }).unwrap();
    assert_eq!(plain.trace, guided.trace);
    assert_eq!(plain.params, guided.params);
    assert_eq!(plain.graph, guided.graph);
}

#[test]
fn guided_fit_is_deterministic_and_validates() {
    let mut cfg = GraphSamplerConfig::new(6, 3);
    cfg.indegree_range = (1.0, 1.5);
    let inst = simulate_instance(&cfg, 300).unwrap();
    let abic = AbicConfig { alm_steps: 4, inner_steps: 2, ..AbicConfig::default() };
    let post = SkeletonPosterior::constant(6, 0.3).unwrap();
    let gc = GuideConfig { seed: 4, ..GuideConfig::default() };
    let a = spot_fit(&inst.data, &post, &abic, &gc).unwrap();
    let b = spot_fit(&inst.data, &post, &abic, &gc).unwrap();
    assert_eq!(a.trace, b.trace);
    assert!(a.trace.iter().any(|r| r.accepted < 30 + 15));
    assert!(spot_fit(&inst.data, &SkeletonPosterior::constant(5, 0.3).unwrap(), &abic, &gc).is_err());
    assert!(spot_fit(&inst.data, &post, &abic, &GuideConfig { c: -0.1, ..gc }).is_err());
}

proptest! {
    #[test]
    fn acceptance_is_monotone(p in 0.0f64..1.0, q in 0.0f64..1.0, c in 0.0f64..0.5, t in 0usize..50) {
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        prop_assert!(accept_probability(lo, t, c) <= accept_probability(hi, t, c));
        prop_assert!(accept_probability(p, t, c) <= accept_probability(p, t + 1, c) + 1e-15);
        let a = accept_probability(p, t, c);
        prop_assert!((0.0..=1.0).contains(&a));
        if p + c >= 1.0 {
            prop_assert_eq!(a, 1.0);
        }
    }

    #[test]
    fn late_steps_approach_plain_updates(p_min in 0.001f64..0.9, c in 0.0f64..0.2, eps in 0.001f64..0.2) {
        let t0 = steps_to_near_certainty(p_min, c, eps);
        for t in [t0, t0 + 1, t0 + 10, t0 * 2 + 3] {
            for p in [p_min, (p_min + 1.0) / 2.0, 1.0] {
                prop_assert!(1.0 - accept_probability(p, t, c) < eps);
            }
        }
        if t0 > 0 {
            prop_assert!(1.0 - accept_probability(p_min, t0 - 1, c) >= eps);
        }
    }

    #[test]
    fn rejected_coordinates_are_bitwise_unchanged(seed in any::<u64>(), p in 0.0f64..1.0) {
        let d = 4;
        let layout = Layout::new(d, None);
        let mut r = rng::seeded(seed);
        use rand::Rng as _;
        let mut current = ScmParams::zeros(d);
        let mut proposed = ScmParams::zeros(d);
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    current.delta[(i, j)] = r.gen_range(-1.0..1.0);
                    proposed.delta[(i, j)] = r.gen_range(-1.0..1.0);
                    if i < j {
                        let (a, b) = (r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
                        current.beta[(i, j)] = a;
                        current.beta[(j, i)] = a;
                        proposed.beta[(i, j)] = b;
                        proposed.beta[(j, i)] = b;
                    }
                }
            }
        }
        let post = SkeletonPosterior::constant(d, p).unwrap();
        let g = DMatrix::from_fn(d, d, |i, j| ((i * 7 + j * 3) as f64).sin());
        let gb = (&g + g.transpose()) * 0.5;
        let mut out = proposed.clone();
        let cfg = GuideConfig { c: 0.05, sparsity_unconditional: seed % 2 == 0, seed };
        let n = posterior_guided_update(&current, &mut out, (&g, &gb), &post, &layout, StepContext { t_outer: 1, t_inner: 2 }, &cfg);
        let mut kept = 0;
        for i in 0..d {
            for j in 0..d {
                let v = out.delta[(i, j)];
                prop_assert!(v.to_bits() == current.delta[(i, j)].to_bits() || v.to_bits() == proposed.delta[(i, j)].to_bits());
                if i != j && v.to_bits() == proposed.delta[(i, j)].to_bits() {
                    kept += 1;
                }
                prop_assert_eq!(out.beta[(i, j)].to_bits(), out.beta[(j, i)].to_bits());
            }
        }
        for &(i, j) in &layout.beta {
            if out.beta[(i, j)].to_bits() == proposed.beta[(i, j)].to_bits() {
                kept += 1;
            }
        }
        prop_assert_eq!(n, kept);
    }
}
