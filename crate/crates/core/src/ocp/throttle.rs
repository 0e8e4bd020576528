//! Throttle recovered from a speed history: Π = (m dv/dt + D)/T_max.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::performance::Performance;

use super::integrate::Trajectory;
use super::scenario::Scenario;

/// Tolerance on throttle bounds before a node is flagged.
pub const BOUND_SLACK: f64 = 1e-3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThrottleHistory {
    pub throttle: Vec<f64>,
    pub dv_dt: Vec<f64>,
    /// Node indices outside [Π_min, Π_max] by more than the slack.
    pub violations: Vec<usize>,
}

/// dv/dt by central differences, one-sided second-order at the ends.
pub fn speed_derivative(t: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let n = t.len();
    if n < 3 || v.len() != n {
        return Err(Error::Domain("need at least 3 nodes of matching length".into()));
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        d[k] = (v[k + 1] - v[k - 1]) / (t[k + 1] - t[k - 1]);
    }
    let one_sided = |t0: f64, t1: f64, t2: f64, v0: f64, v1: f64, v2: f64| {
        // derivative at t0 of the quadratic through the three points
        let (h1, h2) = (t1 - t0, t2 - t0);
        (v1 - v0) * h2 / (h1 * (h2 - h1)) - (v2 - v0) * h1 / (h2 * (h2 - h1))
    };
    d[0] = one_sided(t[0], t[1], t[2], v[0], v[1], v[2]);
    d[n - 1] = one_sided(t[n - 1], t[n - 2], t[n - 3], v[n - 1], v[n - 2], v[n - 3]);
    Ok(d)
}

pub fn reconstruct_from(
    perf: &Performance,
    t: &[f64],
    v: &[f64],
    m: &[f64],
    bounds: (f64, f64),
) -> Result<ThrottleHistory> {
    let dv = speed_derivative(t, v)?;
    if m.len() != t.len() {
        return Err(Error::Domain("mass history length mismatch".into()));
    }
    let mut throttle = Vec::with_capacity(t.len());
    let mut violations = Vec::new();
    for k in 0..t.len() {
        let pt = perf.eval(m[k], v[k]);
        let pi = (m[k] * dv[k] + pt.drag) / pt.thrust_max;
        if pi < bounds.0 - BOUND_SLACK || pi > bounds.1 + BOUND_SLACK {
            violations.push(k);
        }
        throttle.push(pi);
    }
    Ok(ThrottleHistory {
        throttle,
        dv_dt: dv,
        violations,
    })
}

pub fn reconstruct_throttle(traj: &Trajectory, scenario: &Scenario) -> Result<ThrottleHistory> {
    let perf = Performance::new(scenario.aircraft.clone(), scenario.altitude_m)?;
    let t: Vec<f64> = traj.nodes.iter().map(|n| n.t).collect();
    let v: Vec<f64> = traj.nodes.iter().map(|n| n.v).collect();
    let m: Vec<f64> = traj.nodes.iter().map(|n| n.m).collect();
    let b = scenario.bounds;
    reconstruct_from(&perf, &t, &v, &m, (b.throttle_min, b.throttle_max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::performance::AircraftModel;

    #[test]
    fn constant_speed_gives_required_throttle() {
        let perf = Performance::new(AircraftModel::default(), 1e4).unwrap();
        let t: Vec<f64> = (0..10).map(|k| 30.0 * k as f64).collect();
        let v = vec![235.0; 10];
        let m: Vec<f64> = (0..10).map(|k| 1.4e5 - 50.0 * k as f64).collect();
        let h = reconstruct_from(&perf, &t, &v, &m, (0.1, 1.0)).unwrap();
        for k in 0..10 {
            assert_eq!(h.throttle[k], perf.throttle_required(m[k], 235.0).unwrap());
        }
        assert!(h.violations.is_empty());
    }

    #[test]
    fn linear_profile_derivative_exact() {
        let t: Vec<f64> = (0..7).map(|k| 0.5 * k as f64 * k as f64).collect();
        let v: Vec<f64> = t.iter().map(|t| 200.0 + 0.3 * t).collect();
        for d in speed_derivative(&t, &v).unwrap() {
            assert!((d - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn refinement_reduces_error() {
        let err = |n: usize| {
            let t: Vec<f64> = (0..=n).map(|k| 100.0 * k as f64 / n as f64).collect();
            let v: Vec<f64> = t.iter().map(|t| 230.0 + 5.0 * (t / 20.0).sin()).collect();
            let d = speed_derivative(&t, &v).unwrap();
            t.iter()
                .zip(&d)
                .map(|(t, d)| (d - 0.25 * (t / 20.0).cos()).abs())
                .fold(0.0, f64::max)
        };
        assert!(err(80) < 0.5 * err(40));
    }

    #[test]
    fn too_few_nodes() {
        assert!(speed_derivative(&[0.0, 1.0], &[1.0, 2.0]).is_err());
    }
}
