//! Orthant-wise limited-memory quasi-Newton minimization of
//! `smooth(x) + sum_k l1[k] * |x[k]|`.

use std::collections::VecDeque;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OwlqnConfig {
    pub max_iter: usize,
    /// Stop when the largest pseudo-gradient entry falls below this.
    pub tol: f64,
    pub memory: usize,
}

impl Default for OwlqnConfig {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-6,
            memory: 10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OwlqnOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// A smooth objective: returns the value and, when asked, writes the
/// gradient.
pub trait Smooth {
    fn value(&mut self, x: &[f64]) -> f64;
    fn value_grad(&mut self, x: &[f64], grad: &mut [f64]) -> f64;
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn l1_value(x: &[f64], l1: &[f64]) -> f64 {
    x.iter().zip(l1).map(|(v, w)| w * v.abs()).sum()
}

/// Subgradient of minimum norm.
pub fn pseudo_gradient(x: &[f64], g: &[f64], l1: &[f64], out: &mut [f64]) {
    for k in 0..x.len() {
        let w = l1[k];
        out[k] = if w == 0.0 {
            g[k]
        } else if x[k] > 0.0 {
            g[k] + w
        } else if x[k] < 0.0 {
            g[k] - w
        } else if g[k] + w < 0.0 {
            g[k] + w
        } else if g[k] - w > 0.0 {
            g[k] - w
        } else {
            0.0
        };
    }
}

pub fn minimize(f: &mut impl Smooth, x0: Vec<f64>, l1: &[f64], cfg: &OwlqnConfig) -> OwlqnOutcome {
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut fx = f.value_grad(&x, &mut g) + l1_value(&x, l1);
    let mut pg = vec![0.0; n];
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut dir = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut alpha_buf = vec![0.0; cfg.memory];

    for it in 0..cfg.max_iter {
        pseudo_gradient(&x, &g, l1, &mut pg);
        let pg_norm = pg.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if pg_norm < cfg.tol || n == 0 {
            return OwlqnOutcome { x, value: fx, iterations: it, converged: true };
        }

        // Two-loop recursion on the pseudo-gradient.
        dir.copy_from_slice(&pg);
        for (k, (s, y, rho)) in mem.iter().enumerate().rev() {
            let a = rho * dot(s, &dir);
            alpha_buf[k] = a;
            for (d, yv) in dir.iter_mut().zip(y) {
                *d -= a * yv;
            }
        }
        if let Some((s, y, _)) = mem.back() {
            let gamma = dot(s, y) / dot(y, y);
            dir.iter_mut().for_each(|d| *d *= gamma);
        }
        for (k, (s, y, rho)) in mem.iter().enumerate() {
            let b = rho * dot(y, &dir);
            for (d, sv) in dir.iter_mut().zip(s) {
                *d += (alpha_buf[k] - b) * sv;
            }
        }
        for k in 0..n {
            dir[k] = -dir[k];
            if l1[k] > 0.0 && dir[k] * pg[k] >= 0.0 {
                dir[k] = 0.0;
            }
        }
        if dot(&dir, &pg) >= 0.0 {
            mem.clear();
            for k in 0..n {
                dir[k] = -pg[k];
            }
        }

        let mut step = if mem.is_empty() { 1.0 / pg_norm.max(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..50 {
            for k in 0..n {
                let orthant = if x[k] != 0.0 { x[k].signum() } else { -pg[k].signum() };
                let v = x[k] + step * dir[k];
                trial[k] = if l1[k] > 0.0 && v * orthant <= 0.0 { 0.0 } else { v };
            }
            let ft = f.value(&trial) + l1_value(&trial, l1);
            let decrease: f64 = (0..n).map(|k| pg[k] * (trial[k] - x[k])).sum();
            if ft.is_finite() && ft <= fx + 1e-4 * decrease {
                accepted = Some(ft);
                break;
            }
            step *= 0.5;
        }
        let Some(_) = accepted else {
            return OwlqnOutcome { x, value: fx, iterations: it + 1, converged: false };
        };
        let f_new = f.value_grad(&trial, &mut g_new) + l1_value(&trial, l1);
        let s: Vec<f64> = (0..n).map(|k| trial[k] - x[k]).collect();
        let y: Vec<f64> = (0..n).map(|k| g_new[k] - g[k]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).max(f64::MIN_POSITIVE) {
            if mem.len() == cfg.memory {
                mem.pop_front();
            }
            mem.push_back((s, y, 1.0 / sy));
        }
        let rel = (fx - f_new).abs() / fx.abs().max(1.0);
        std::mem::swap(&mut x, &mut trial);
        std::mem::swap(&mut g, &mut g_new);
        fx = f_new;
        if rel < 1e-14 {
            return OwlqnOutcome { x, value: fx, iterations: it + 1, converged: true };
        }
    }
    OwlqnOutcome { x, value: fx, iterations: cfg.max_iter, converged: false }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic {
        center: Vec<f64>,
        scale: Vec<f64>,
    }

    impl Smooth for Quadratic {
        fn value(&mut self, x: &[f64]) -> f64 {
            x.iter().zip(&self.center).zip(&self.scale).map(|((v, c), s)| 0.5 * s * (v - c).powi(2)).sum()
        }

        fn value_grad(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
            for k in 0..x.len() {
                grad[k] = self.scale[k] * (x[k] - self.center[k]);
            }
            self.value(x)
        }
    }

    #[test]
    fn soft_thresholding_solution() {
        // Separable lasso: minimizer is the soft-threshold of the center.
        let mut q = Quadratic {
            center: vec![2.0, -0.3, 0.05, -4.0],
            scale: vec![1.0, 2.0, 1.0, 0.5],
        };
        let l1 = [0.5, 0.5, 0.5, 0.0];
        let out = minimize(&mut q, vec![0.0; 4], &l1, &OwlqnConfig { max_iter: 200, tol: 1e-10, memory: 5 });
        let expected = [1.5, -0.05, 0.0, -4.0];
        for (a, b) in out.x.iter().zip(expected) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
        assert!(out.converged);
    }

    struct Rosenbrock;

    impl Smooth for Rosenbrock {
        fn value(&mut self, x: &[f64]) -> f64 {
            (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
        }

        fn value_grad(&mut self, x: &[f64], g: &mut [f64]) -> f64 {
            g[0] = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]);
            g[1] = 200.0 * (x[1] - x[0] * x[0]);
            self.value(x)
        }
    }

    #[test]
    fn smooth_problem_converges_monotonically() {
        let out = minimize(&mut Rosenbrock, vec![-1.2, 1.0], &[0.0, 0.0], &OwlqnConfig { max_iter: 500, tol: 1e-8, memory: 8 });
        assert!((out.x[0] - 1.0).abs() < 1e-5 && (out.x[1] - 1.0).abs() < 1e-5, "{out:?}");
    }
}
