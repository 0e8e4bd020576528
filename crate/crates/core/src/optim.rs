//! Box-constrained limited-memory quasi-Newton minimization with a
//! projected backtracking line search.

use std::collections::VecDeque;
use std::time::Instant;

#[derive(Debug, Clone)]
pub struct BoxOptions {
    pub max_iter: usize,
    pub memory: usize,
    /// Stop when the projected gradient ∞-norm drops below this.
    pub pg_tol: f64,
    /// Stop when the relative decrease of f stays below this for 5 iterations.
    pub f_rel_tol: f64,
    pub deadline: Option<Instant>,
}

impl Default for BoxOptions {
    fn default() -> Self {
        Self {
            max_iter: 2000,
            memory: 12,
            pg_tol: 1e-9,
            f_rel_tol: 1e-14,
            deadline: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoxReport {
    pub x: Vec<f64>,
    pub f: f64,
    pub pg_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

fn pg_norm(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..x.len() {
        let p = (x[i] - g[i]).clamp(lo[i], hi[i]) - x[i];
        m = m.max(p.abs());
    }
    m
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimize f over lo ≤ x ≤ hi. `f(x, g)` returns the value and writes the gradient.
pub fn minimize_box<F>(mut f: F, x0: Vec<f64>, lo: &[f64], hi: &[f64], opts: &BoxOptions) -> BoxReport
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    project(&mut x, lo, hi);
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut evals = 1;
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut stall = 0;
    let mut iterations = 0;
    let mut pg = pg_norm(&x, &g, lo, hi);
    let mut xn = vec![0.0; n];
    let mut gn = vec![0.0; n];

    while iterations < opts.max_iter && pg > opts.pg_tol {
        if opts.deadline.is_some_and(|d| Instant::now() >= d) {
            break;
        }
        iterations += 1;
        // variables held at a bound by the gradient
        let fixed: Vec<bool> = (0..n)
            .map(|i| (x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0))
            .collect();
        let mut q: Vec<f64> = (0..n).map(|i| if fixed[i] { 0.0 } else { g[i] }).collect();
        let mut alphas = Vec::with_capacity(mem.len());
        for (s, y, rho) in mem.iter().rev() {
            let a = rho * dot(s, &q);
            for i in 0..n {
                q[i] -= a * y[i];
            }
            alphas.push(a);
        }
        let gamma = mem.back().map_or(1.0, |(s, y, _)| dot(s, y) / dot(y, y));
        for v in q.iter_mut() {
            *v *= gamma;
        }
        for ((s, y, rho), a) in mem.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for i in 0..n {
                q[i] += s[i] * (a - b);
            }
        }
        let mut d: Vec<f64> = (0..n).map(|i| if fixed[i] { 0.0 } else { -q[i] }).collect();
        if dot(&d, &g) >= 0.0 {
            mem.clear();
            d = (0..n).map(|i| if fixed[i] { 0.0 } else { -g[i] }).collect();
        }
        let mut step = if mem.is_empty() {
            (1.0 / d.iter().fold(0.0f64, |m, v| m.max(v.abs()))).min(1.0)
        } else {
            1.0
        };
        let mut accepted = false;
        for _ in 0..50 {
            for i in 0..n {
                xn[i] = x[i] + step * d[i];
            }
            project(&mut xn, lo, hi);
            let fnew = f(&xn, &mut gn);
            evals += 1;
            let dec: f64 = (0..n).map(|i| g[i] * (xn[i] - x[i])).sum();
            if fnew.is_finite() && fnew <= fx + 1e-4 * dec {
                let s: Vec<f64> = (0..n).map(|i| xn[i] - x[i]).collect();
                let y: Vec<f64> = (0..n).map(|i| gn[i] - g[i]).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
                    mem.push_back((s, y, 1.0 / sy));
                    if mem.len() > opts.memory {
                        mem.pop_front();
                    }
                }
                if (fx - fnew).abs() <= opts.f_rel_tol * fx.abs().max(1.0) {
                    stall += 1;
                } else {
                    stall = 0;
                }
                std::mem::swap(&mut x, &mut xn);
                std::mem::swap(&mut g, &mut gn);
                fx = fnew;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        pg = pg_norm(&x, &g, lo, hi);
        if !accepted {
            if mem.is_empty() {
                break;
            }
            mem.clear();
            continue;
        }
        if stall >= 5 {
            break;
        }
    }
    BoxReport {
        converged: pg <= opts.pg_tol,
        x,
        f: fx,
        pg_norm: pg,
        iterations,
        evaluations: evals,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounded_rosenbrock() {
        let f = |x: &[f64], g: &mut [f64]| {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        // unconstrained optimum (1, 1) excluded by a ≤ 0.5
        let r = minimize_box(f, vec![-1.0, 2.0], &[-2.0, -2.0], &[0.5, 2.0], &BoxOptions::default());
        assert!((r.x[0] - 0.5).abs() < 1e-9 && (r.x[1] - 0.25).abs() < 1e-6, "{:?}", r.x);
    }

    #[test]
    fn separable_quadratic_hits_bounds() {
        let c = [3.0, -2.0, 0.5, 10.0];
        let f = |x: &[f64], g: &mut [f64]| {
            let mut s = 0.0;
            for i in 0..4 {
                g[i] = (i + 1) as f64 * (x[i] - c[i]);
                s += 0.5 * (i + 1) as f64 * (x[i] - c[i]).powi(2);
            }
            s
        };
        let r = minimize_box(f, vec![0.0; 4], &[-1.0; 4], &[1.0; 4], &BoxOptions::default());
        let expect = [1.0, -1.0, 0.5, 1.0];
        for i in 0..4 {
            assert!((r.x[i] - expect[i]).abs() < 1e-9);
        }
        assert!(r.converged);
    }
}
