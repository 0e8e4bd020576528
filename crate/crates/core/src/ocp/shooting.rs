//! Single shooting on (λx0, χ0, tf) with Levenberg–Marquardt, plus hazard
//! continuation and multi-start fallbacks.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::lsq::{levenberg_marquardt, LmOptions};

use super::control::feasible_intervals;
use super::dynamics::{LX, M, X, Y};
use super::integrate::{integrate_states, integrate_trajectory, ShootingParams, Trajectory, DEFAULT_STEPS};
use super::problem::Problem;
use super::scenario::Scenario;

/// Residual assigned to each component when the integration aborts.
const FAIL_RESIDUAL: f64 = 1e3;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub steps: usize,
    /// Convergence threshold on the scaled residual norm.
    pub tol: f64,
    pub max_iter: usize,
    pub time_limit_s: Option<f64>,
    /// Allow hazard continuation and multi-start when the direct attempt fails.
    pub fallbacks: bool,
    /// Initial guess in the working frame; computed when absent.
    pub initial: Option<ShootingParams>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            steps: DEFAULT_STEPS,
            tol: 1e-6,
            max_iter: 200,
            time_limit_s: None,
            fallbacks: true,
            initial: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    NotConverged,
    TimedOut,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    /// max_t |H(t) + c_t|
    pub hamiltonian_drift: f64,
    pub arc_switches: usize,
    pub lambda_m_junction_jump: f64,
    /// Which path produced the returned iterate: "direct", "continuation" or "multistart".
    pub strategy: String,
    pub lm_iterations: usize,
    pub residual_evaluations: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Solution {
    pub status: Status,
    /// Working-frame unknowns.
    pub params: ShootingParams,
    /// Costate and heading at t = 0 in the scenario frame.
    pub lambda_x0: f64,
    pub lambda_y0: f64,
    pub chi0: f64,
    pub tf: f64,
    /// Scaled terminal residual (x, y, λm).
    pub residual: [f64; 3],
    pub residual_norm: f64,
    /// Scaled residual norm per LM iteration of the final stage.
    pub residual_history: Vec<f64>,
    /// Working-frame iterate per entry of `residual_history`.
    pub param_history: Vec<ShootingParams>,
    /// c_t·tf + c_m·m(tf) + ∫g dt
    pub objective: f64,
    pub fuel_burn_kg: f64,
    pub penalty_integral: f64,
    pub trajectory: Option<Trajectory>,
    pub diagnostics: Diagnostics,
    pub wall_time_s: f64,
}

impl Solution {
    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }
}

/// Scale for the λm residual component.
pub fn lambda_m_scale(p: &Problem) -> f64 {
    let fm = p.perf_at(p.m0, p.v_max).fm.abs();
    p.cm.abs() + p.ct / fm.max(1e-12)
}

/// Scaled terminal residual in the working frame:
/// ((x − L)/L, y/L, (λm − c_m)/scale).
pub fn shoot_residual(p: &Problem, params: &ShootingParams, steps: usize) -> Result<[f64; 3]> {
    let states = integrate_states(p, params, steps)?;
    let s = states.last().expect("at least one state");
    let n = super::dynamics::eval_node(p, s, params.tf, &mut Default::default())?;
    let l = p.length;
    Ok([
        (s[X] - l) / l,
        s[Y] / l,
        (n.law.lambda_m - p.cm) / lambda_m_scale(p),
    ])
}

fn residual_vec(p: &Problem, x: &[f64], steps: usize) -> Vec<f64> {
    match shoot_residual(p, &ShootingParams::from_slice(x), steps) {
        Ok(r) => r.to_vec(),
        Err(_) => vec![FAIL_RESIDUAL; 3],
    }
}

/// Starting point: straight flight along the chord at the speed v_ref that
/// minimizes the cost per unit ground distance at m0, with chord-averaged
/// wind and penalty. For min-time and no wind this is λx0 = −c_t/v_max.
pub fn initial_guess(p: &Problem) -> ShootingParams {
    let n = 21;
    let (mut w_par, mut w_perp, mut g) = (0.0, 0.0, 0.0);
    for k in 0..n {
        let e = p.env(p.length * k as f64 / (n - 1) as f64, 0.0);
        w_par += e.wind.wx / n as f64;
        w_perp += e.wind.wy / n as f64;
        g += e.g / n as f64;
    }
    let b = p.scenario.bounds;
    let mut best = (f64::INFINITY, p.v_max);
    let ivs = feasible_intervals(p, p.m0);
    for k in 0..=200 {
        let v = p.v_min + (p.v_max - p.v_min) * k as f64 / 200.0;
        let inside = ivs.is_empty() || ivs.iter().any(|iv| v >= iv.lo && v <= iv.hi);
        let pt = p.perf_at(p.m0, v);
        if !inside || pt.throttle() > b.throttle_max {
            continue;
        }
        let ground = v + w_par;
        if ground <= 0.0 {
            continue;
        }
        let kappa = (p.ct + p.cm * pt.fm + g) / ground;
        if kappa < best.0 {
            best = (kappa, v);
        }
    }
    let v_ref = best.1;
    let chi0 = -(w_perp / v_ref).clamp(-0.9, 0.9).asin();
    let ground = (v_ref * chi0.cos() + w_par).max(0.1 * v_ref);
    let kappa = if best.0.is_finite() { best.0 } else { p.ct / v_ref };
    ShootingParams {
        lambda_x0: -kappa * (1.0 + 1e-3) - 1e-12,
        chi0: chi0.clamp(p.chi_min, p.chi_max),
        tf: p.length / (0.95 * ground),
    }
}

struct Stage {
    params: ShootingParams,
    norm: f64,
    residual: [f64; 3],
    converged: bool,
    timed_out: bool,
    iterations: usize,
    evaluations: usize,
    history: Vec<f64>,
    x_history: Vec<ShootingParams>,
}

fn run_lm(p: &Problem, init: ShootingParams, cfg: &SolverConfig, deadline: Option<Instant>) -> Stage {
    let opts = LmOptions {
        max_iter: cfg.max_iter,
        tol: cfg.tol,
        fd_step: 1e-7,
        scale: Some(vec![init.lambda_x0.abs() + 1e-6, 1.0, init.tf]),
        lambda0: 1e-3,
        deadline,
        // with fallbacks available a stalled attempt only wastes time
        stall: cfg.fallbacks.then_some((20, 0.5)),
    };
    let steps = cfg.steps;
    let rep = levenberg_marquardt(|x| residual_vec(p, x, steps), init.to_vec(), &opts);
    let mut residual = [0.0; 3];
    residual.copy_from_slice(&rep.residual);
    Stage {
        params: ShootingParams::from_slice(&rep.x),
        norm: rep.norm,
        residual,
        converged: rep.converged,
        timed_out: rep.timed_out,
        iterations: rep.iterations,
        evaluations: rep.evaluations,
        history: rep.history,
        x_history: rep.x_history.iter().map(|x| ShootingParams::from_slice(x)).collect(),
    }
}

/// Ramp the hazard weight from 0 to 1, warm-starting each stage.
fn continuation(
    p: &Problem,
    init: ShootingParams,
    cfg: &SolverConfig,
    deadline: Option<Instant>,
    evals: &mut (usize, usize),
) -> Option<Stage> {
    let mut s: f64 = 0.0;
    let mut ds: f64 = 0.25;
    let mut current = init;
    let mut last: Option<Stage> = None;
    for _ in 0..40 {
        let target = if last.is_none() { 0.0 } else { (s + ds).min(1.0) };
        let stage = run_lm(&p.with_hazard_scale(target), current, cfg, deadline);
        evals.0 += stage.iterations;
        evals.1 += stage.evaluations;
        if stage.timed_out {
            return None;
        }
        if stage.converged {
            log::debug!("continuation reached hazard scale {target:.4}");
            s = target;
            current = stage.params;
            let done = s >= 1.0;
            last = Some(stage);
            if done {
                return last;
            }
            ds = (ds * 1.5).min(1.0 - s);
        } else if last.is_none() {
            return None;
        } else {
            ds *= 0.5;
            if ds < 1.0 / 256.0 {
                return None;
            }
        }
    }
    None
}

/// Solve the shooting problem for a scenario.
pub fn solve(scenario: &Scenario, cfg: &SolverConfig) -> Result<Solution> {
    let start = Instant::now();
    let deadline = cfg.time_limit_s.map(|s| start + Duration::from_secs_f64(s.max(0.0)));
    let p = Problem::new(scenario)?;
    let init = cfg.initial.unwrap_or_else(|| initial_guess(&p));
    init.validate()?;
    let mut warnings = Vec::new();
    let mut evals = (0, 0);

    let mut best = run_lm(&p, init, cfg, deadline);
    evals.0 += best.iterations;
    evals.1 += best.evaluations;
    let mut strategy = "direct";

    if !best.converged && !best.timed_out && cfg.fallbacks {
        if !scenario.hazards.is_empty() {
            if let Some(st) = continuation(&p, init, cfg, deadline, &mut evals) {
                best = st;
                strategy = "continuation";
            }
        }
        if !best.converged {
            'outer: for dchi in [0.15, -0.15, 0.35, -0.35] {
                for lx in [1.0, 0.8, 1.25] {
                    if deadline.is_some_and(|d| Instant::now() >= d) {
                        best.timed_out = true;
                        break 'outer;
                    }
                    let guess = ShootingParams {
                        lambda_x0: init.lambda_x0 * lx,
                        chi0: (init.chi0 + dchi).clamp(-1.4, 1.4),
                        tf: init.tf,
                    };
                    let st = run_lm(&p, guess, cfg, deadline);
                    evals.0 += st.iterations;
                    evals.1 += st.evaluations;
                    if st.norm < best.norm {
                        best = st;
                        strategy = "multistart";
                    }
                    if best.converged {
                        break 'outer;
                    }
                }
            }
        }
    }

    let status = if best.converged {
        Status::Converged
    } else if best.timed_out {
        Status::TimedOut
    } else {
        Status::NotConverged
    };
    if status != Status::Converged {
        warnings.push(format!(
            "shooting stopped with scaled residual {:.3e} (tolerance {:.1e})",
            best.norm, cfg.tol
        ));
    }

    let trajectory = match integrate_trajectory(&p, &best.params, cfg.steps) {
        Ok(t) => Some(t),
        Err(e) => {
            warnings.push(format!("best iterate does not integrate: {e}"));
            None
        }
    };
    let params = best.params;
    let (lx0, ly0) = p.frame.vec_out(params.lambda_x0, params.lambda_x0 * params.chi0.tan());
    let (objective, fuel, pen, drift, switches, jump) = match &trajectory {
        Some(t) => {
            let e = t.last();
            let drift = t
                .nodes
                .iter()
                .map(|n| (n.hamiltonian + p.ct).abs())
                .fold(0.0, f64::max);
            (
                p.ct * e.t + p.cm * e.m + e.z,
                p.m0 - e.m,
                e.z,
                drift,
                t.arc_switches(),
                t.lambda_m_junction_jump(),
            )
        }
        None => (f64::NAN, f64::NAN, f64::NAN, f64::NAN, 0, 0.0),
    };
    if let Some(t) = &trajectory {
        let last = t.states.last().expect("states");
        if last[M] <= p.min_mass() || last[LX] >= 0.0 {
            warnings.push("terminal state at an abort boundary".into());
        }
        if jump > 1e-2 {
            warnings.push(format!("lambda_m changes by {:.2}% across an arc junction", 100.0 * jump));
        }
    }

    Ok(Solution {
        status,
        params,
        lambda_x0: lx0,
        lambda_y0: ly0,
        chi0: params.chi0 + p.frame.theta,
        tf: params.tf,
        residual: best.residual,
        residual_norm: best.norm,
        residual_history: best.history,
        param_history: best.x_history,
        objective,
        fuel_burn_kg: fuel,
        penalty_integral: pen,
        trajectory,
        diagnostics: Diagnostics {
            hamiltonian_drift: drift,
            arc_switches: switches,
            lambda_m_junction_jump: jump,
            strategy: strategy.into(),
            lm_iterations: evals.0,
            residual_evaluations: evals.1,
            warnings,
        },
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocp::analytic::analytic_min_time_constant_wind;
    use crate::windfield::WindField;

    #[test]
    fn initial_guess_is_exact_for_min_time_without_wind() {
        let mut sc = Scenario::basic(6e5, 2e5, 1.0, 0.0);
        sc.initial_mass_kg = 1.15e5;
        let p = Problem::new(&sc).unwrap();
        let g = initial_guess(&p);
        assert!((g.lambda_x0 + 1.0 / p.v_max).abs() < 2e-3 / p.v_max);
        assert_eq!(g.chi0, 0.0);
    }

    #[test]
    fn constant_wind_min_time_matches_closed_form() {
        let mut sc = Scenario::basic(8e5, 3e5, 1.0, 0.0);
        sc.initial_mass_kg = 1.15e5;
        sc.wind = WindField::uniform(20.0, -15.0);
        let sol = solve(&sc, &SolverConfig::default()).unwrap();
        assert!(sol.converged(), "{:?}", sol.diagnostics);
        let p = Problem::new(&sc).unwrap();
        let (chi, tf) = analytic_min_time_constant_wind(8e5, 3e5, 20.0, -15.0, p.v_max).unwrap();
        assert!((sol.chi0 - chi).abs() < 1e-3, "{} vs {chi}", sol.chi0);
        assert!((sol.tf - tf).abs() < 0.1, "{} vs {tf}", sol.tf);
        assert!(sol.diagnostics.hamiltonian_drift < 1e-6 * 2.0);
    }

    #[test]
    fn residual_monotone_after_third_iteration() {
        let sc = Scenario::basic(9e5, 4e5, 1.0, -1.0);
        let sol = solve(&sc, &SolverConfig::default()).unwrap();
        assert!(sol.converged());
        let h = &sol.residual_history;
        assert!(h.iter().skip(3).zip(h.iter().skip(4)).all(|(a, b)| b <= a));
    }
}
