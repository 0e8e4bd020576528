//! Pointwise Hamiltonian minimization over airspeed.
//!
//! With heading fixed, H(v; λm) = λx(c·v + w) + λm F_m(m, v) + g where
//! c = cos χ + q sin χ and w = Wx + q Wy. The speed law finds the pair
//! (v*, λm) with v* = argmin over the feasible set of H(·; λm) and
//! H(v*; λm) = −c_t. The function h(λm) = min_v H(v; λm) + c_t is concave
//! and strictly decreasing (slope F_m(v*) < 0), so Newton on h converges
//! monotonically. For λm < 0 the inner problem is convex because
//! F_m,vv < 0 over the operating envelope; for λm ≥ 0 it is concave and
//! the minimum sits on an interval end.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::performance::PerfPoint;
use crate::roots::brent;

use super::problem::Problem;

/// Which constraint, if any, is active at a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arc {
    Interior,
    VMin,
    VMax,
    PiMin,
    PiMax,
    ChiMin,
    ChiMax,
}

impl Arc {
    pub fn as_str(&self) -> &'static str {
        match self {
            Arc::Interior => "interior",
            Arc::VMin => "v_min",
            Arc::VMax => "v_max",
            Arc::PiMin => "pi_min",
            Arc::PiMax => "pi_max",
            Arc::ChiMin => "chi_min",
            Arc::ChiMax => "chi_max",
        }
    }

    pub fn parse(s: &str) -> Option<Arc> {
        Some(match s {
            "interior" => Arc::Interior,
            "v_min" => Arc::VMin,
            "v_max" => Arc::VMax,
            "pi_min" => Arc::PiMin,
            "pi_max" => Arc::PiMax,
            "chi_min" => Arc::ChiMin,
            "chi_max" => Arc::ChiMax,
            _ => return None,
        })
    }
}

/// Feasible speed interval and the constraints bounding it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub lo_arc: Arc,
    pub hi_arc: Arc,
}

/// Grid resolution of the throttle-feasibility scan.
const SCAN: usize = 32;

/// Release tolerance on the switching function used when labelling arcs.
pub const ARC_DELTA: f64 = 1e-4;

fn throttle_state(pi: f64, lo: f64, hi: f64) -> i8 {
    if pi < lo {
        -1
    } else if pi > hi {
        1
    } else {
        0
    }
}

/// Speeds in [v_min, v_max] whose required throttle lies in [Π_min, Π_max].
pub fn feasible_intervals(p: &Problem, m: f64) -> Vec<Interval> {
    let b = p.scenario.bounds;
    let (pl, ph) = (b.throttle_min, b.throttle_max);
    let pi = |v: f64| p.perf.eval(m, v).throttle();
    let mut out = Vec::new();
    let dv = (p.v_max - p.v_min) / (SCAN - 1) as f64;
    let mut v_prev = p.v_min;
    let mut s_prev = throttle_state(pi(v_prev), pl, ph);
    let mut open: Option<(f64, Arc)> = (s_prev == 0).then_some((p.v_min, Arc::VMin));
    for k in 1..SCAN {
        let v = if k == SCAN - 1 { p.v_max } else { p.v_min + k as f64 * dv };
        let s = throttle_state(pi(v), pl, ph);
        if s != s_prev {
            // Refine each bound crossed between the two grid speeds.
            let mut crossings: Vec<(f64, f64)> = Vec::new();
            for bound in [pl, ph] {
                let f = |u: f64| pi(u) - bound;
                let (fa, fb) = (f(v_prev), f(v));
                if fa.signum() != fb.signum() {
                    if let Ok(r) = brent(f, v_prev, v, 1e-10 * p.v_max) {
                        crossings.push((r, bound));
                    }
                }
            }
            crossings.sort_by(|a, b| a.0.total_cmp(&b.0));
            for (r, bound) in crossings {
                let arc = if bound == pl { Arc::PiMin } else { Arc::PiMax };
                match open.take() {
                    Some((lo, lo_arc)) => out.push(Interval {
                        lo,
                        hi: r,
                        lo_arc,
                        hi_arc: arc,
                    }),
                    None => open = Some((r, arc)),
                }
            }
        }
        v_prev = v;
        s_prev = s;
    }
    if let Some((lo, lo_arc)) = open {
        out.push(Interval {
            lo,
            hi: p.v_max,
            lo_arc,
            hi_arc: Arc::VMax,
        });
    }
    out.retain(|i| i.hi >= i.lo);
    out
}

/// Mixed-boundary arc speed: the largest root of Π(m, v) = Π_b in the
/// Mach bracket.
pub fn boundary_arc_speed(p: &Problem, m: f64, pi_b: f64) -> Result<f64> {
    let roots = boundary_arc_roots(p, m, pi_b);
    roots.last().copied().ok_or_else(|| {
        Error::Infeasible(format!(
            "throttle {pi_b} is not attainable at m = {m:.0} kg for Mach in [{:.3}, {:.3}]",
            p.scenario.bounds.mach_min, p.scenario.bounds.mach_max
        ))
    })
}

/// All roots of Π(m, v) = Π_b in [v_min, v_max], ascending.
pub fn boundary_arc_roots(p: &Problem, m: f64, pi_b: f64) -> Vec<f64> {
    let f = |v: f64| p.perf.eval(m, v).throttle() - pi_b;
    let n = 256;
    let dv = (p.v_max - p.v_min) / n as f64;
    let mut roots = Vec::new();
    let mut a = p.v_min;
    let mut fa = f(a);
    if fa == 0.0 {
        roots.push(a);
    }
    for k in 1..=n {
        let b = if k == n { p.v_max } else { p.v_min + k as f64 * dv };
        let fb = f(b);
        if fb == 0.0 {
            roots.push(b);
        } else if fa != 0.0 && fa.signum() != fb.signum() {
            if let Ok(r) = brent(f, a, b, 1e-12 * p.v_max) {
                roots.push(r);
            }
        }
        a = b;
        fa = fb;
    }
    roots
}

/// Coefficients of the speed-dependent Hamiltonian at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedProblem {
    pub m: f64,
    pub lambda_x: f64,
    /// cos χ + q sin χ (equals √(1+q²) off heading bounds).
    pub c: f64,
    /// Wx + q·Wy
    pub w: f64,
    /// Penalty rate g.
    pub g: f64,
}

impl SpeedProblem {
    pub fn hamiltonian(&self, pt: &PerfPoint, v: f64, lambda_m: f64) -> f64 {
        self.lambda_x * (self.c * v + self.w) + lambda_m * pt.fm + self.g
    }

    pub fn dh_dv(&self, pt: &PerfPoint, lambda_m: f64) -> f64 {
        self.lambda_x * self.c + lambda_m * pt.fm_v
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedLaw {
    pub v: f64,
    pub lambda_m: f64,
    pub arc: Arc,
    /// ∂H/∂v at the returned speed.
    pub switching: f64,
    pub perf: PerfPoint,
}

/// Warm start carried between successive evaluations.
#[derive(Debug, Clone, Copy, Default)]
pub struct SpeedHint {
    pub lambda_m: Option<f64>,
}

struct Inner {
    v: f64,
    h: f64,
    arc: Arc,
    pt: PerfPoint,
}

fn minimize_on(p: &Problem, sp: &SpeedProblem, iv: &Interval, lambda_m: f64) -> Inner {
    let at = |v: f64| p.perf.eval(sp.m, v);
    let end = |v: f64, arc: Arc| {
        let pt = at(v);
        Inner {
            v,
            h: sp.hamiltonian(&pt, v, lambda_m),
            arc,
            pt,
        }
    };
    if lambda_m < 0.0 {
        let phi = |v: f64| sp.dh_dv(&at(v), lambda_m);
        let (plo, phi_hi) = (phi(iv.lo), phi(iv.hi));
        if plo >= 0.0 {
            return end(iv.lo, iv.lo_arc);
        }
        if phi_hi <= 0.0 {
            return end(iv.hi, iv.hi_arc);
        }
        match brent(phi, iv.lo, iv.hi, 1e-10 * iv.hi) {
            Ok(v) => end(v, Arc::Interior),
            Err(_) => {
                let (a, b) = (end(iv.lo, iv.lo_arc), end(iv.hi, iv.hi_arc));
                if a.h <= b.h {
                    a
                } else {
                    b
                }
            }
        }
    } else {
        let (a, b) = (end(iv.lo, iv.lo_arc), end(iv.hi, iv.hi_arc));
        if a.h <= b.h {
            a
        } else {
            b
        }
    }
}

fn minimize(p: &Problem, sp: &SpeedProblem, ivs: &[Interval], lambda_m: f64) -> Inner {
    let mut best: Option<Inner> = None;
    for iv in ivs {
        let r = minimize_on(p, sp, iv, lambda_m);
        if best.as_ref().map_or(true, |b| r.h < b.h) {
            best = Some(r);
        }
    }
    best.expect("non-empty interval list")
}

/// Solve for (v*, λm) so that v* minimizes H and H(v*) = −c_t.
pub fn optimal_speed(p: &Problem, sp: &SpeedProblem, hint: &mut SpeedHint) -> Result<SpeedLaw> {
    let ivs = feasible_intervals(p, sp.m);
    if ivs.is_empty() {
        return Err(Error::Infeasible(format!(
            "no speed in Mach [{:.3}, {:.3}] keeps throttle within [{}, {}] at m = {:.0} kg",
            p.scenario.bounds.mach_min,
            p.scenario.bounds.mach_max,
            p.scenario.bounds.throttle_min,
            p.scenario.bounds.throttle_max,
            sp.m
        )));
    }
    optimal_speed_on(p, sp, &ivs, hint)
}

pub fn optimal_speed_on(
    p: &Problem,
    sp: &SpeedProblem,
    ivs: &[Interval],
    hint: &mut SpeedHint,
) -> Result<SpeedLaw> {
    let ct = p.ct;
    let mut lam = match hint.lambda_m {
        Some(l) if l.is_finite() => l,
        _ => {
            let v = ivs.last().unwrap().hi;
            let pt = p.perf.eval(sp.m, v);
            -(ct + sp.lambda_x * (sp.c * v + sp.w) + sp.g) / pt.fm
        }
    };
    // h(λ) > 0 left of the root, < 0 right of it.
    let mut left = f64::NEG_INFINITY;
    let mut right = f64::INFINITY;
    let mut inner = minimize(p, sp, ivs, lam);
    let mut converged = false;
    for _ in 0..100 {
        let h = inner.h + ct;
        let scale = ct.abs()
            + (sp.lambda_x * (sp.c * inner.v + sp.w)).abs()
            + (lam * inner.pt.fm).abs()
            + sp.g.abs();
        if h.abs() <= 1e-13 * scale.max(1e-300) {
            converged = true;
            break;
        }
        if h > 0.0 {
            left = left.max(lam);
        } else {
            right = right.min(lam);
        }
        let mut next = lam - h / inner.pt.fm;
        if !(next > left && next < right) {
            next = if left.is_finite() && right.is_finite() {
                0.5 * (left + right)
            } else if h > 0.0 {
                lam + (lam.abs() + 1.0)
            } else {
                lam - (lam.abs() + 1.0)
            };
        }
        if next == lam {
            converged = true;
            break;
        }
        lam = next;
        inner = minimize(p, sp, ivs, lam);
    }
    if !converged && !(left.is_finite() && right.is_finite() && (right - left) <= 1e-12 * right.abs().max(1e-12)) {
        return Err(Error::Domain(format!(
            "speed law did not converge (m = {:.1}, lambda_x = {:.6e}, c = {:.6}, w = {:.4}, g = {:.4e})",
            sp.m, sp.lambda_x, sp.c, sp.w, sp.g
        )));
    }
    let v = inner.v;
    let pt = inner.pt;
    let lambda_m = -(ct + sp.lambda_x * (sp.c * v + sp.w) + sp.g) / pt.fm;
    hint.lambda_m = Some(lambda_m);
    let switching = sp.dh_dv(&pt, lambda_m);
    let arc = if inner.arc != Arc::Interior && switching.abs() <= ARC_DELTA * (sp.lambda_x * sp.c).abs() {
        // the bound is touched but the switching function has released
        Arc::Interior
    } else {
        inner.arc
    };
    Ok(SpeedLaw {
        v,
        lambda_m,
        arc,
        switching,
        perf: pt,
    })
}
