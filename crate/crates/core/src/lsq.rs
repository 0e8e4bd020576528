//! Levenberg–Marquardt for small dense nonlinear least-squares and
//! square root-finding problems, with forward-difference Jacobians.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Stop when the residual 2-norm drops below this.
    pub tol: f64,
    /// Relative forward-difference step.
    pub fd_step: f64,
    /// Characteristic magnitude per parameter; steps are taken in x/scale.
    pub scale: Option<Vec<f64>>,
    pub lambda0: f64,
    pub deadline: Option<Instant>,
    /// Give up when the residual has not dropped below `factor` times its
    /// value `window` iterations earlier.
    pub stall: Option<(usize, f64)>,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-10,
            fd_step: 1e-6,
            scale: None,
            lambda0: 1e-3,
            deadline: None,
            stall: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub x: Vec<f64>,
    pub residual: Vec<f64>,
    pub norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub timed_out: bool,
    /// Residual norm after each accepted or final iteration, starting with the initial guess.
    pub history: Vec<f64>,
    /// Parameter vector matching each entry of `history`.
    pub x_history: Vec<Vec<f64>>,
}

fn norm(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Minimize ‖f(x)‖² starting from `x0`. Non-finite residuals are treated as
/// rejected steps.
pub fn levenberg_marquardt<F>(mut f: F, x0: Vec<f64>, opts: &LmOptions) -> LmReport
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let n = x0.len();
    let scale: Vec<f64> = match &opts.scale {
        Some(s) => s.iter().map(|v| v.abs().max(1e-300)).collect(),
        None => x0.iter().map(|v| v.abs().max(1.0)).collect(),
    };
    let mut x = x0;
    let mut r = f(&x);
    let mut evals = 1;
    let mut fx = norm(&r);
    let mut history = vec![fx];
    let mut x_history = vec![x.clone()];
    let mut lambda = opts.lambda0;
    let mut iterations = 0;
    let mut timed_out = false;

    while iterations < opts.max_iter && !(fx < opts.tol) {
        if opts.deadline.is_some_and(|d| Instant::now() >= d) {
            timed_out = true;
            break;
        }
        iterations += 1;
        let m = r.len();
        // Jacobian with respect to scaled variables z = x / scale.
        let mut jac = DMatrix::<f64>::zeros(m, n);
        for j in 0..n {
            let h = opts.fd_step * x[j].abs().max(scale[j]);
            let mut xp = x.clone();
            xp[j] += h;
            let rp = f(&xp);
            evals += 1;
            let hs = h / scale[j];
            for i in 0..m {
                jac[(i, j)] = (rp[i] - r[i]) / hs;
            }
        }
        let rv = DVector::from_column_slice(&r);
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &rv;
        let diag: Vec<f64> = (0..n).map(|i| jtj[(i, i)].max(1e-12)).collect();

        let mut accepted = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * diag[i];
            }
            let Some(dz) = a.lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            let xn: Vec<f64> = (0..n).map(|i| x[i] + dz[i] * scale[i]).collect();
            let rn = f(&xn);
            evals += 1;
            let fxn = norm(&rn);
            if fxn.is_finite() && fxn < fx {
                x = xn;
                r = rn;
                fx = fxn;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                break;
            }
            lambda *= 4.0;
            if lambda > 1e16 {
                break;
            }
        }
        history.push(fx);
        x_history.push(x.clone());
        if !accepted {
            break;
        }
        if let Some((w, factor)) = opts.stall {
            if history.len() > w && fx > factor * history[history.len() - 1 - w] {
                break;
            }
        }
    }
    LmReport {
        converged: fx < opts.tol,
        x,
        residual: r,
        norm: fx,
        iterations,
        evaluations: evals,
        timed_out,
        history,
        x_history,
    }
}
