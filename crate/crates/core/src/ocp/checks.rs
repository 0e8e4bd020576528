//! Optimality diagnostics evaluated on a solved trajectory, each computed
//! independently of the quantities the shooting solver relies on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hazards::penalty;

use super::control::{Arc, SpeedHint};
use super::dynamics::{eval_node, LX, Q};
use super::integrate::Trajectory;
use super::problem::Problem;

/// max_t |H(t) + c_t|
pub fn hamiltonian_drift(traj: &Trajectory, ct: f64) -> f64 {
    traj.nodes.iter().map(|n| (n.hamiltonian + ct).abs()).fold(0.0, f64::max)
}

/// Smallest ∂²H/∂v² over interior-arc nodes (second finite difference of
/// λm·Fm in v). `None` when there is no interior node.
pub fn min_interior_curvature(p: &Problem, traj: &Trajectory) -> Option<f64> {
    let mut out: Option<f64> = None;
    for n in traj.nodes.iter().filter(|n| n.arc == Arc::Interior) {
        let h = 1e-3 * n.v;
        let fm = |v: f64| p.perf_at(n.m, v).fm;
        let d2 = n.lambda_m * (fm(n.v + h) - 2.0 * fm(n.v) + fm(n.v - h)) / (h * h);
        out = Some(out.map_or(d2, |o| o.min(d2)));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaMCheck {
    /// max over the trajectory of a = C_s ∂D/∂m
    pub a_max: f64,
    /// −|c_m| and −|c_m| exp(−a_max tf)
    pub lower: f64,
    pub upper: f64,
    pub within_bounds: bool,
    /// λm non-increasing in t
    pub monotone: bool,
    /// max relative gap between λm and the backward solution of dλm/dt = a λm
    pub ode_gap: f64,
}

/// λm against its own costate equation dλm/dt = a(t) λm with λm(tf) = c_m.
pub fn lambda_m_check(p: &Problem, traj: &Trajectory) -> Result<LambdaMCheck> {
    if !(p.cm < 0.0) {
        return Err(Error::Domain("lambda_m bounds need c_m < 0".into()));
    }
    let nodes = &traj.nodes;
    let a: Vec<f64> = nodes.iter().map(|n| -p.perf_at(n.m, n.v).fm_m).collect();
    let a_max = a.iter().copied().fold(0.0, f64::max);
    let tf = traj.tf();
    let lower = -p.cm.abs();
    let upper = -p.cm.abs() * (-a_max * tf).exp();
    // the shooting residual leaves λm(tf) = c_m only up to its tolerance
    let slack = (traj.last().lambda_m - p.cm).abs() + 1e-12 * p.cm.abs();
    let within_bounds = nodes
        .iter()
        .all(|n| n.lambda_m >= lower - slack && n.lambda_m <= upper + slack);
    let monotone = nodes.windows(2).all(|w| w[1].lambda_m <= w[0].lambda_m + slack);
    // ln|λm(t)| = ln|c_m| − ∫_t^tf a, trapezoid backward
    let mut integral = 0.0;
    let mut ode_gap: f64 = 0.0;
    let last = nodes.len() - 1;
    for k in (0..=last).rev() {
        if k < last {
            integral += 0.5 * (a[k] + a[k + 1]) * (nodes[k + 1].t - nodes[k].t);
        }
        let lm = p.cm * (-integral).exp();
        ode_gap = ode_gap.max((nodes[k].lambda_m - lm).abs() / lm.abs());
    }
    Ok(LambdaMCheck {
        a_max,
        lower,
        upper,
        within_bounds,
        monotone,
        ode_gap,
    })
}

/// Largest relative mismatch between the integrated (λx, λy) derivative and
/// −∂H/∂(x, y) rebuilt in the scenario frame from wind and penalty.
pub fn costate_consistency(p: &Problem, traj: &Trajectory) -> Result<f64> {
    let f = &p.frame;
    let mut worst: f64 = 0.0;
    let mut hint = SpeedHint::default();
    for (node, s) in traj.nodes.iter().zip(&traj.states) {
        let n = eval_node(p, s, node.t, &mut hint)?;
        let dlx = n.deriv[LX];
        let dly = n.deriv[Q] * s[LX] + s[Q] * dlx;
        let (ax, ay) = f.vec_out(dlx, dly);

        let w = p.scenario.wind.sample(node.x, node.y);
        let (gx, gy) = if p.scenario.hazards.is_empty() {
            (0.0, 0.0)
        } else {
            let g = penalty(&p.scenario.hazards, node.x, node.y);
            (p.hazard_scale * g.gx, p.hazard_scale * g.gy)
        };
        let (lx, ly) = (node.lambda_x, node.lambda_y);
        let bx = -(lx * w.wx_x + ly * w.wy_x + gx);
        let by = -(lx * w.wx_y + ly * w.wy_y + gy);
        let scale = bx.hypot(by) + 1e-12 * lx.hypot(ly);
        worst = worst.max((ax - bx).hypot(ay - by) / scale);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckReport {
    pub hamiltonian_drift: f64,
    pub min_interior_curvature: Option<f64>,
    pub lambda_m: Option<LambdaMCheck>,
    pub costate_consistency: f64,
}

pub fn run_checks(p: &Problem, traj: &Trajectory) -> Result<CheckReport> {
    Ok(CheckReport {
        hamiltonian_drift: hamiltonian_drift(traj, p.ct),
        min_interior_curvature: min_interior_curvature(p, traj),
        lambda_m: if p.cm < 0.0 { Some(lambda_m_check(p, traj)?) } else { None },
        costate_consistency: costate_consistency(p, traj)?,
    })
}
