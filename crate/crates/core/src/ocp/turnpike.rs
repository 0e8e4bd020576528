//! Stability of the quasi-steady speed: for a fixed throttle Π* and mass,
//! the speed dynamics dv/dt = F_v = (Π* T_max − D)/m have a stationary
//! speed v* and a linearization rate λ = ∂F_v/∂v(v*).
//!
//! F_v can have two roots in the Mach bracket: the back-side one (below
//! the min-drag speed) is unstable. The scan reports the largest root.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::rk3_step;
use crate::performance::Performance;
use crate::roots::brent;

use super::scenario::Scenario;

const ROOT_SCAN: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurnpikeCell {
    pub throttle: f64,
    pub mass_kg: f64,
    /// Number of stationary speeds in the bracket.
    pub roots: usize,
    pub v_star: Option<f64>,
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TurnpikeScan {
    pub altitude_m: f64,
    pub v_lo: f64,
    pub v_hi: f64,
    /// Row-major over (throttle, mass).
    pub cells: Vec<TurnpikeCell>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub no_root: usize,
    /// Neighbouring cell pairs (both with a root) where λ changes sign.
    pub sign_flips: usize,
}

impl TurnpikeScan {
    pub fn all_stable(&self) -> bool {
        self.lambda_max < 0.0
    }
}

/// F_v and ∂F_v/∂v.
pub fn speed_rate(perf: &Performance, mass: f64, throttle: f64, v: f64) -> (f64, f64) {
    let pt = perf.eval(mass, v);
    (
        (throttle * pt.thrust_max - pt.drag) / mass,
        (throttle * pt.thrust_max_v - pt.drag_v) / mass,
    )
}

/// All stationary speeds of F_v in [v_lo, v_hi], ascending.
pub fn stationary_speeds(perf: &Performance, mass: f64, throttle: f64, v_lo: f64, v_hi: f64) -> Vec<f64> {
    let f = |v: f64| speed_rate(perf, mass, throttle, v).0;
    let mut out = Vec::new();
    let mut a = v_lo;
    let mut fa = f(a);
    for k in 1..=ROOT_SCAN {
        let b = v_lo + (v_hi - v_lo) * k as f64 / ROOT_SCAN as f64;
        let fb = f(b);
        if fa == 0.0 {
            out.push(a);
        } else if fa * fb < 0.0 {
            if let Ok(r) = brent(f, a, b, 1e-12 * b) {
                out.push(r);
            }
        }
        a = b;
        fa = fb;
    }
    if fa == 0.0 {
        out.push(v_hi);
    }
    out
}

/// Scan λ over a throttle × mass grid at the scenario altitude and Mach bounds.
pub fn turnpike_scan(scenario: &Scenario, throttles: &[f64], masses: &[f64]) -> Result<TurnpikeScan> {
    scenario.aircraft.validate()?;
    if throttles.is_empty() || masses.is_empty() {
        return Err(Error::Domain("turnpike grids must be non-empty".into()));
    }
    if let Some(&m) = masses.iter().find(|m| !(**m > 0.0)) {
        return Err(Error::Domain(format!("mass must be positive, got {m}")));
    }
    if let Some(&t) = throttles.iter().find(|t| !(**t > 0.0)) {
        return Err(Error::Domain(format!("throttle must be positive, got {t}")));
    }
    let perf = Performance::new(scenario.aircraft.clone(), scenario.altitude_m)?;
    let v_lo = perf.speed_of_mach(scenario.bounds.mach_min);
    let v_hi = perf.speed_of_mach(scenario.bounds.mach_max);
    let mut cells = Vec::with_capacity(throttles.len() * masses.len());
    for &pi in throttles {
        for &m in masses {
            let roots = stationary_speeds(&perf, m, pi, v_lo, v_hi);
            let v_star = roots.last().copied();
            cells.push(TurnpikeCell {
                throttle: pi,
                mass_kg: m,
                roots: roots.len(),
                v_star,
                lambda: v_star.map(|v| speed_rate(&perf, m, pi, v).1),
            });
        }
    }
    let lambdas: Vec<f64> = cells.iter().filter_map(|c| c.lambda).collect();
    let nm = masses.len();
    let mut sign_flips = 0;
    for i in 0..throttles.len() {
        for j in 0..nm {
            let here = cells[i * nm + j].lambda;
            let right = (j + 1 < nm).then(|| cells[i * nm + j + 1].lambda).flatten();
            let down = (i + 1 < throttles.len()).then(|| cells[(i + 1) * nm + j].lambda).flatten();
            for other in [right, down].into_iter().flatten() {
                if let Some(h) = here {
                    if h.signum() != other.signum() {
                        sign_flips += 1;
                    }
                }
            }
        }
    }
    Ok(TurnpikeScan {
        altitude_m: scenario.altitude_m,
        v_lo,
        v_hi,
        no_root: cells.iter().filter(|c| c.v_star.is_none()).count(),
        lambda_min: lambdas.iter().copied().fold(f64::INFINITY, f64::min),
        lambda_max: lambdas.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        cells,
        sign_flips,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayReport {
    pub v_start: f64,
    pub v_star: f64,
    pub lambda: f64,
    /// Slope of ln|v − v*| over the near-linear part of the decay.
    pub fitted_rate: f64,
    pub monotone: bool,
    pub final_gap: f64,
}

/// Integrate dv/dt = F_v from v* + dv0 at fixed (Π*, m) and fit the decay rate.
pub fn decay_from(perf: &Performance, mass: f64, throttle: f64, v_star: f64, dv0: f64) -> Result<DecayReport> {
    let (_, lambda) = speed_rate(perf, mass, throttle, v_star);
    if !(lambda < 0.0) {
        return Err(Error::Domain(format!("stationary speed {v_star:.3} m/s is not attracting (rate {lambda:.3e})")));
    }
    let tau = 1.0 / lambda.abs();
    let h = 0.02 * tau;
    let steps = 800;
    let v_cap = perf.atm.sound_speed * 0.99;
    let mut f = |y: &[f64; 1]| [speed_rate(perf, mass, throttle, y[0].clamp(1.0, v_cap)).0];
    let mut v = [v_star + dv0];
    let mut gaps = vec![(0.0, dv0.abs())];
    for k in 1..=steps {
        v = rk3_step(&mut f, &v, h);
        gaps.push((k as f64 * h, (v[0] - v_star).abs()));
    }
    let monotone = gaps.windows(2).all(|w| w[1].1 <= w[0].1 || w[1].1 < 1e-9);
    // least-squares slope of ln gap where the linearization holds
    let pts: Vec<(f64, f64)> = gaps
        .iter()
        .filter(|(_, g)| *g <= 0.05 * dv0.abs() && *g >= 1e-6 * dv0.abs())
        .map(|&(t, g)| (t, g.ln()))
        .collect();
    let fitted_rate = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let (mt, my) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
        let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
        sxy / sxx
    } else {
        f64::NAN
    };
    Ok(DecayReport {
        v_start: v_star + dv0,
        v_star,
        lambda,
        fitted_rate,
        monotone,
        final_gap: gaps.last().map_or(f64::NAN, |g| g.1),
    })
}

/// Evenly spaced grid of `n` points on [a, b].
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect(),
    }
}
