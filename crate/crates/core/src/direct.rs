//! Direct transcription baseline: piecewise-constant (v, χ) per RK3 step,
//! terminal and throttle constraints by an augmented Lagrangian, inner
//! problem by projected L-BFGS with discrete-adjoint gradients.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ocp::problem::Problem;
use crate::ocp::scenario::Scenario;
use crate::ocp::shooting::{initial_guess, Solution};
use crate::optim::{minimize_box, BoxOptions};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DirectConfig {
    pub nodes: usize,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Target max constraint violation (terminal position in units of the chord).
    pub violation_tol: f64,
    pub rho0: f64,
    pub time_limit_s: Option<f64>,
}

impl Default for DirectConfig {
    fn default() -> Self {
        Self {
            nodes: 300,
            max_outer: 25,
            max_inner: 4000,
            violation_tol: 1e-9,
            rho0: 10.0,
            time_limit_s: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectNode {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub m: f64,
    pub z: f64,
    /// Control held on [t, t + h); the last node repeats the final interval.
    pub v: f64,
    pub chi: f64,
    pub throttle: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectSolution {
    pub converged: bool,
    pub tf: f64,
    pub objective: f64,
    pub fuel_burn_kg: f64,
    pub nodes: Vec<DirectNode>,
    /// Max constraint violation after each accepted outer iteration.
    pub violation_history: Vec<f64>,
    pub inner_iterations: usize,
    pub evaluations: usize,
    pub wall_time_s: f64,
}

type S4 = [f64; 4];

#[derive(Clone, Copy, Default)]
struct Jac {
    /// ∂f/∂(x, y, m) for the four state equations
    fs: [[f64; 3]; 4],
    /// ∂f/∂(v, χ)
    fu: [[f64; 2]; 4],
}

struct Transcription {
    p: Problem,
    n: usize,
    tf_scale: f64,
    j_scale: f64,
}

struct Forward {
    states: Vec<S4>,
    // per step: stage states and slopes
    stages: Vec<[S4; 3]>,
    slopes: Vec<[S4; 3]>,
}

impl Transcription {
    fn rhs(&self, s: &S4, v: f64, chi: f64) -> S4 {
        let e = self.p.env(s[0], s[1]);
        let (sc, cc) = chi.sin_cos();
        let pt = self.p.perf_at(s[2], v);
        [v * cc + e.wind.wx, v * sc + e.wind.wy, pt.fm, e.g]
    }

    fn rhs_jac(&self, s: &S4, v: f64, chi: f64) -> Jac {
        let e = self.p.env(s[0], s[1]);
        let w = e.wind;
        let (sc, cc) = chi.sin_cos();
        let pt = self.p.perf_at(s[2], v);
        Jac {
            fs: [
                [w.wx_x, w.wx_y, 0.0],
                [w.wy_x, w.wy_y, 0.0],
                [0.0, 0.0, pt.fm_m],
                [e.gx, e.gy, 0.0],
            ],
            fu: [[cc, -v * sc], [sc, v * cc], [pt.fm_v, 0.0], [0.0, 0.0]],
        }
    }

    fn unpack(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        let n = self.n;
        let v = z[..n].iter().map(|u| u * self.p.v_max).collect();
        let chi = z[n..2 * n].to_vec();
        (v, chi, z[2 * n] * self.tf_scale)
    }

    fn forward(&self, v: &[f64], chi: &[f64], tf: f64) -> Forward {
        let h = tf / self.n as f64;
        let mut s: S4 = [0.0, 0.0, self.p.m0, 0.0];
        let mut states = Vec::with_capacity(self.n + 1);
        let mut stages = Vec::with_capacity(self.n);
        let mut slopes = Vec::with_capacity(self.n);
        states.push(s);
        for k in 0..self.n {
            let k1 = self.rhs(&s, v[k], chi[k]);
            let y2: S4 = std::array::from_fn(|i| s[i] + 0.5 * h * k1[i]);
            let k2 = self.rhs(&y2, v[k], chi[k]);
            let y3: S4 = std::array::from_fn(|i| s[i] - h * k1[i] + 2.0 * h * k2[i]);
            let k3 = self.rhs(&y3, v[k], chi[k]);
            stages.push([s, y2, y3]);
            slopes.push([k1, k2, k3]);
            s = std::array::from_fn(|i| s[i] + h / 6.0 * (k1[i] + 4.0 * k2[i] + k3[i]));
            states.push(s);
        }
        Forward { states, stages, slopes }
    }

    fn objective(&self, fw: &Forward, tf: f64) -> f64 {
        let e = fw.states.last().unwrap();
        self.p.ct * tf + self.p.cm * e[2] + e[3]
    }

    /// Terminal equalities (x − L, y)/L and throttle inequalities ≤ 0.
    fn constraints(&self, fw: &Forward, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let e = fw.states.last().unwrap();
        let l = self.p.length;
        let b = self.p.scenario.bounds;
        let mut ineq = Vec::with_capacity(2 * self.n);
        for k in 0..self.n {
            let pi = self.p.perf_at(fw.states[k][2], v[k]).throttle();
            ineq.push(pi - b.throttle_max);
            ineq.push(b.throttle_min - pi);
        }
        (vec![(e[0] - l) / l, e[1] / l], ineq)
    }

    fn violation(eq: &[f64], ineq: &[f64]) -> f64 {
        eq.iter()
            .map(|c| c.abs())
            .chain(ineq.iter().map(|c| c.max(0.0)))
            .fold(0.0, f64::max)
    }

    /// Augmented Lagrangian value and gradient in scaled variables.
    fn al(&self, z: &[f64], grad: &mut [f64], mu_eq: &[f64], mu_in: &[f64], rho: f64) -> f64 {
        let n = self.n;
        let (v, chi, tf) = self.unpack(z);
        if !(tf > 0.0) {
            return f64::INFINITY;
        }
        let h = tf / n as f64;
        let fw = self.forward(&v, &chi, tf);
        let (eq, ineq) = self.constraints(&fw, &v);
        let mut val = self.objective(&fw, tf) / self.j_scale;
        let mut deq = [0.0; 2];
        for i in 0..2 {
            val += mu_eq[i] * eq[i] + 0.5 * rho * eq[i] * eq[i];
            deq[i] = mu_eq[i] + rho * eq[i];
        }
        let mut din = vec![0.0; ineq.len()];
        for i in 0..ineq.len() {
            let t = (mu_in[i] + rho * ineq[i]).max(0.0);
            val += (t * t - mu_in[i] * mu_in[i]) / (2.0 * rho);
            din[i] = t;
        }
        if !val.is_finite() {
            return f64::INFINITY;
        }

        // adjoint sweep
        let l = self.p.length;
        let mut gv = vec![0.0; n];
        let mut gchi = vec![0.0; n];
        let mut gh = 0.0;
        let mut lam: S4 = [deq[0] / l, deq[1] / l, self.p.cm / self.j_scale, 1.0 / self.j_scale];
        let mut gtf = self.p.ct / self.j_scale;
        for k in (0..n).rev() {
            let [y1, y2, y3] = fw.stages[k];
            let [k1, k2, k3] = fw.slopes[k];
            let (vk, ck) = (v[k], chi[k]);
            let mut kb1: S4 = std::array::from_fn(|i| h / 6.0 * lam[i]);
            let mut kb2: S4 = std::array::from_fn(|i| 4.0 * h / 6.0 * lam[i]);
            let kb3: S4 = std::array::from_fn(|i| h / 6.0 * lam[i]);
            gh += (0..4).map(|i| lam[i] * (k1[i] + 4.0 * k2[i] + k3[i]) / 6.0).sum::<f64>();
            let mut ys = lam;

            let push = |jac: &Jac, kb: &S4, out: &mut S4, gv: &mut f64, gc: &mut f64| {
                for r in 0..4 {
                    for c in 0..3 {
                        out[c] += jac.fs[r][c] * kb[r];
                    }
                    *gv += jac.fu[r][0] * kb[r];
                    *gc += jac.fu[r][1] * kb[r];
                }
            };

            let j3 = self.rhs_jac(&y3, vk, ck);
            let mut yb3 = [0.0; 4];
            push(&j3, &kb3, &mut yb3, &mut gv[k], &mut gchi[k]);
            for i in 0..4 {
                ys[i] += yb3[i];
                kb1[i] -= h * yb3[i];
                kb2[i] += 2.0 * h * yb3[i];
            }
            gh += (0..4).map(|i| yb3[i] * (-k1[i] + 2.0 * k2[i])).sum::<f64>();

            let j2 = self.rhs_jac(&y2, vk, ck);
            let mut yb2 = [0.0; 4];
            push(&j2, &kb2, &mut yb2, &mut gv[k], &mut gchi[k]);
            for i in 0..4 {
                ys[i] += yb2[i];
                kb1[i] += 0.5 * h * yb2[i];
            }
            gh += (0..4).map(|i| yb2[i] * 0.5 * k1[i]).sum::<f64>();

            let j1 = self.rhs_jac(&y1, vk, ck);
            let mut yb1 = [0.0; 4];
            push(&j1, &kb1, &mut yb1, &mut gv[k], &mut gchi[k]);
            for i in 0..4 {
                ys[i] += yb1[i];
            }

            // throttle constraints at the start of interval k
            let pt = self.p.perf_at(y1[2], vk);
            let dpi_dm = pt.drag_m / pt.thrust_max;
            let dpi_dv = pt.throttle_v();
            let w = din[2 * k] - din[2 * k + 1];
            ys[2] += w * dpi_dm;
            gv[k] += w * dpi_dv;
            lam = ys;
        }
        gtf += gh / n as f64;
        for k in 0..n {
            grad[k] = gv[k] * self.p.v_max;
            grad[n + k] = gchi[k];
        }
        grad[2 * n] = gtf * self.tf_scale;
        val
    }

    fn nodes(&self, z: &[f64]) -> (Vec<DirectNode>, f64, f64) {
        let (v, chi, tf) = self.unpack(z);
        let fw = self.forward(&v, &chi, tf);
        let h = tf / self.n as f64;
        let f = &self.p.frame;
        let nodes = fw
            .states
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let kk = k.min(self.n - 1);
                let (x, y) = f.point_out(s[0], s[1]);
                DirectNode {
                    t: k as f64 * h,
                    x,
                    y,
                    m: s[2],
                    z: s[3],
                    v: v[kk],
                    chi: chi[kk] + f.theta,
                    throttle: self.p.perf_at(s[2], v[kk]).throttle(),
                }
            })
            .collect();
        (nodes, self.objective(&fw, tf), tf)
    }
}

/// Solve the transcribed problem from a straight-chord initial guess.
pub fn solve_direct(scenario: &Scenario, cfg: &DirectConfig) -> Result<DirectSolution> {
    let start = Instant::now();
    if cfg.nodes < 10 {
        return Err(Error::validation("nodes", "N >= 10"));
    }
    let deadline = cfg.time_limit_s.map(|s| start + Duration::from_secs_f64(s.max(0.0)));
    let p = Problem::new(scenario)?;
    let guess = initial_guess(&p);
    let n = cfg.nodes;
    let v_ref = p.length / (guess.tf * 0.95);
    let v0 = v_ref.clamp(p.v_min, p.v_max);
    let tr = {
        let fm = p.perf_at(p.m0, v0).fm.abs();
        let j_scale = (p.ct + p.cm.abs() * fm + 1e-3) * guess.tf;
        Transcription {
            p,
            n,
            tf_scale: guess.tf,
            j_scale,
        }
    };
    let p = &tr.p;
    let mut z = vec![0.0; 2 * n + 1];
    for k in 0..n {
        z[k] = v0 / p.v_max;
        z[n + k] = guess.chi0;
    }
    z[2 * n] = 1.0;
    let mut lo = vec![0.0; 2 * n + 1];
    let mut hi = vec![0.0; 2 * n + 1];
    for k in 0..n {
        lo[k] = p.v_min / p.v_max;
        hi[k] = 1.0;
        lo[n + k] = p.chi_min;
        hi[n + k] = p.chi_max;
    }
    lo[2 * n] = 0.2;
    hi[2 * n] = 5.0;

    let mut mu_eq = vec![0.0; 2];
    let mut mu_in = vec![0.0; 2 * n];
    let mut rho = cfg.rho0;
    let mut history = Vec::new();
    let mut prev = f64::INFINITY;
    let (mut inner_iters, mut evals) = (0, 0);
    let mut converged = false;
    let mut grad = vec![0.0; 2 * n + 1];

    for _ in 0..cfg.max_outer {
        if deadline.is_some_and(|d| Instant::now() >= d) {
            break;
        }
        let opts = BoxOptions {
            max_iter: cfg.max_inner,
            pg_tol: 1e-10,
            deadline,
            ..BoxOptions::default()
        };
        let rep = minimize_box(|x, g| tr.al(x, g, &mu_eq, &mu_in, rho), z.clone(), &lo, &hi, &opts);
        inner_iters += rep.iterations;
        evals += rep.evaluations;
        let (v, chi, tf) = tr.unpack(&rep.x);
        let fw = tr.forward(&v, &chi, tf);
        let (eq, ineq) = tr.constraints(&fw, &v);
        let viol = Transcription::violation(&eq, &ineq);
        log::debug!("direct outer: rho {rho:.1e} violation {viol:.3e} inner {}", rep.iterations);
        if viol > prev {
            // keep the accepted iterate; tighten the penalty and retry
            rho *= 10.0;
            continue;
        }
        z = rep.x;
        for i in 0..2 {
            mu_eq[i] += rho * eq[i];
        }
        for i in 0..ineq.len() {
            mu_in[i] = (mu_in[i] + rho * ineq[i]).max(0.0);
        }
        history.push(viol);
        if viol <= cfg.violation_tol {
            let _ = tr.al(&z, &mut grad, &mu_eq, &mu_in, rho);
            converged = true;
            break;
        }
        if viol > 0.25 * prev {
            rho *= 10.0;
        }
        prev = viol;
    }
    let (nodes, objective, tf) = tr.nodes(&z);
    Ok(DirectSolution {
        converged,
        tf,
        objective,
        fuel_burn_kg: p.m0 - nodes.last().unwrap().m,
        nodes,
        violation_history: history,
        inner_iterations: inner_iters,
        evaluations: evals,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Comparison {
    pub surrogate_objective: f64,
    pub direct_objective: f64,
    /// |J_s − J_d| / |J_d|
    pub relative_error: f64,
    pub rms_speed_mps: f64,
    pub rms_heading_rad: f64,
    /// direct wall time / surrogate wall time
    pub time_ratio: f64,
}

fn interp(ts: &[f64], ys: &[f64], t: f64) -> f64 {
    match ts.iter().position(|&x| x >= t) {
        None => *ys.last().unwrap(),
        Some(0) => ys[0],
        Some(i) => {
            let w = (t - ts[i - 1]) / (ts[i] - ts[i - 1]);
            ys[i - 1] + w * (ys[i] - ys[i - 1])
        }
    }
}

/// Compare on 200 points of normalized time t/tf.
pub fn compare(surrogate: &Solution, direct: &DirectSolution) -> Result<Comparison> {
    let tr = surrogate
        .trajectory
        .as_ref()
        .ok_or_else(|| Error::Domain("surrogate solution has no trajectory".into()))?;
    let ts: Vec<f64> = tr.nodes.iter().map(|n| n.t / surrogate.tf).collect();
    let sv: Vec<f64> = tr.nodes.iter().map(|n| n.v).collect();
    let sc: Vec<f64> = tr.nodes.iter().map(|n| n.chi).collect();
    // direct controls are piecewise constant; sample at interval midpoints
    let nd = direct.nodes.len() - 1;
    let td: Vec<f64> = (0..nd).map(|k| (k as f64 + 0.5) / nd as f64).collect();
    let dv: Vec<f64> = direct.nodes[..nd].iter().map(|n| n.v).collect();
    let dc: Vec<f64> = direct.nodes[..nd].iter().map(|n| n.chi).collect();
    let m = 200;
    let (mut ev, mut ec) = (0.0, 0.0);
    for k in 0..m {
        let t = (k as f64 + 0.5) / m as f64;
        ev += (interp(&ts, &sv, t) - interp(&td, &dv, t)).powi(2) / m as f64;
        ec += (interp(&ts, &sc, t) - interp(&td, &dc, t)).powi(2) / m as f64;
    }
    Ok(Comparison {
        surrogate_objective: surrogate.objective,
        direct_objective: direct.objective,
        relative_error: (surrogate.objective - direct.objective).abs() / direct.objective.abs(),
        rms_speed_mps: ev.sqrt(),
        rms_heading_rad: ec.sqrt(),
        time_ratio: direct.wall_time_s / surrogate.wall_time_s.max(1e-9),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::windfield::{WindField, WindPrimitive};

    fn transcription(sc: &Scenario, n: usize) -> Transcription {
        let p = Problem::new(sc).unwrap();
        let g = initial_guess(&p);
        Transcription {
            p,
            n,
            tf_scale: g.tf,
            j_scale: 1e4,
        }
    }

    #[test]
    fn adjoint_gradient_matches_finite_differences() {
        let mut sc = Scenario::nominal();
        sc.wind = WindField::new(vec![
            WindPrimitive::Uniform { u_mps: 4.0, v_mps: -6.0 },
            WindPrimitive::Vortex { gamma_m2ps: 2e7, x_m: 5e5, y_m: 2e5, radius_m: 2e5 },
        ]);
        let n = 12;
        let tr = transcription(&sc, n);
        let mut z = vec![0.0; 2 * n + 1];
        for k in 0..n {
            z[k] = 0.9 + 0.005 * k as f64;
            z[n + k] = 0.3 * (k as f64 / 3.0).sin();
        }
        z[2 * n] = 1.02;
        let mu_eq = [0.3, -0.2];
        // some active throttle multipliers
        let mu_in: Vec<f64> = (0..2 * n).map(|i| if i % 2 == 0 { 0.1 } else { 0.0 }).collect();
        let rho = 50.0;
        let mut g = vec![0.0; 2 * n + 1];
        tr.al(&z, &mut g, &mu_eq, &mu_in, rho);
        let mut scratch = vec![0.0; 2 * n + 1];
        for i in 0..2 * n + 1 {
            let h = 1e-6;
            let mut zp = z.clone();
            zp[i] += h;
            let mut zm = z.clone();
            zm[i] -= h;
            let fd = (tr.al(&zp, &mut scratch, &mu_eq, &mu_in, rho) - tr.al(&zm, &mut scratch, &mu_eq, &mu_in, rho))
                / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-5 * g[i].abs().max(1e-3), "component {i}: fd {fd} adjoint {}", g[i]);
        }
    }

    #[test]
    fn straight_line_min_time() {
        let mut sc = Scenario::basic(4e5, 3e5, 1.0, 0.0);
        sc.initial_mass_kg = 1.15e5;
        let cfg = DirectConfig { nodes: 40, ..DirectConfig::default() };
        let d = solve_direct(&sc, &cfg).unwrap();
        assert!(d.converged);
        let p = Problem::new(&sc).unwrap();
        let tf = 5e5 / p.v_max;
        assert!((d.objective - tf).abs() <= 5e-3 * tf, "{} vs {tf}", d.objective);
        assert!(d.violation_history.windows(2).all(|w| w[1] <= w[0]));
    }
}
