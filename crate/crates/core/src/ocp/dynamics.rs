//! Right-hand side of the augmented state/costate system in the working frame.
//!
//! State y = (x, y, m, z, λx, q) with λy = q·λx, λz = 1 and λm recovered
//! from H ≡ −c_t. The heading minimizing H for λx < 0 is atan q; on a
//! heading bound the applied heading is clamped while q keeps following
//! the costate ratio.

use crate::error::{Error, Result};

use super::control::{optimal_speed, Arc, SpeedHint, SpeedLaw, SpeedProblem};
use super::problem::{Env, Problem, CHI_ABORT};

pub const X: usize = 0;
pub const Y: usize = 1;
pub const M: usize = 2;
pub const Z: usize = 3;
pub const LX: usize = 4;
pub const Q: usize = 5;

pub type State = [f64; 6];

#[derive(Debug, Clone, Copy)]
pub struct NodeEval {
    pub law: SpeedLaw,
    /// Applied heading in the working frame.
    pub chi: f64,
    pub heading_arc: Option<Arc>,
    pub env: Env,
    pub deriv: State,
}

impl NodeEval {
    pub fn arc(&self) -> Arc {
        self.heading_arc.unwrap_or(self.law.arc)
    }
}

fn abort(t: f64, reason: impl Into<String>) -> Error {
    Error::IntegrationAbort {
        t,
        reason: reason.into(),
    }
}

/// Controls and state derivative at `s`; `t` is only used in diagnostics.
pub fn eval_node(p: &Problem, s: &State, t: f64, hint: &mut SpeedHint) -> Result<NodeEval> {
    if s.iter().any(|v| !v.is_finite()) {
        return Err(abort(t, "non-finite state"));
    }
    let lx = s[LX];
    if !(lx < 0.0) {
        return Err(abort(t, format!("lambda_x left the negative half-line ({lx:.3e})")));
    }
    let q = s[Q];
    let chi_free = q.atan();
    if chi_free.abs() >= CHI_ABORT {
        return Err(abort(t, "heading reached 89 deg from the chord"));
    }
    if s[M] <= p.min_mass() {
        return Err(abort(t, "fuel exhausted"));
    }
    let (chi, heading_arc) = if chi_free < p.chi_min {
        (p.chi_min, Some(Arc::ChiMin))
    } else if chi_free > p.chi_max {
        (p.chi_max, Some(Arc::ChiMax))
    } else {
        (chi_free, None)
    };
    let (sc, cc) = chi.sin_cos();
    let env = p.env(s[X], s[Y]);
    let w = env.wind;
    let sp = SpeedProblem {
        m: s[M],
        lambda_x: lx,
        c: cc + q * sc,
        w: w.wx + q * w.wy,
        g: env.g,
    };
    let law = optimal_speed(p, &sp, hint).map_err(|e| abort(t, e.to_string()))?;
    let v = law.v;
    let deriv = [
        v * cc + w.wx,
        v * sc + w.wy,
        law.perf.fm,
        env.g,
        -env.gx - lx * (w.wx_x + q * w.wy_x),
        -w.wx_y + (w.wx_x - w.wy_y) * q + w.wy_x * q * q + (q * env.gx - env.gy) / lx,
    ];
    Ok(NodeEval {
        law,
        chi,
        heading_arc,
        env,
        deriv,
    })
}

/// Hamiltonian λx Fx + λy Fy + λm Fm + Fz at an evaluated node.
pub fn hamiltonian(s: &State, n: &NodeEval) -> f64 {
    let lx = s[LX];
    let ly = s[Q] * lx;
    lx * n.deriv[X] + ly * n.deriv[Y] + n.law.lambda_m * n.deriv[M] + n.deriv[Z]
}

/// λy and λm from the state and the speed law.
pub fn derived_costates(s: &State, n: &NodeEval) -> (f64, f64) {
    (s[Q] * s[LX], n.law.lambda_m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocp::scenario::Scenario;
    use crate::windfield::WindField;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_wind_straight_extremal() {
        let p = Problem::new(&Scenario::basic(1.0e6, 3.0e5, 1.0, -1.0)).unwrap();
        let s = [1e5, 2e4, 1.4e5, 0.0, -8e-3, 0.1];
        let n = eval_node(&p, &s, 0.0, &mut SpeedHint::default()).unwrap();
        assert_eq!(n.deriv[LX], 0.0);
        assert_eq!(n.deriv[Q], 0.0);
        assert!((hamiltonian(&s, &n) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_wind_keeps_heading() {
        let mut sc = Scenario::basic(1.0e6, 3.0e5, 1.0, 0.0);
        sc.wind = WindField::uniform(12.0, -7.0);
        let p = Problem::new(&sc).unwrap();
        let s = [1e5, 2e4, 1.4e5, 0.0, -4e-3, -0.2];
        let n = eval_node(&p, &s, 0.0, &mut SpeedHint::default()).unwrap();
        assert_eq!(n.deriv[Q], 0.0);
    }

    #[test]
    fn sign_structure_at_random_states() {
        let p = Problem::new(&Scenario::nominal()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let s = [
                rng.gen_range(0.0..p.length),
                rng.gen_range(-3e5..3e5),
                rng.gen_range(1.0e5..1.4e5),
                0.0,
                -rng.gen_range(1e-3..2e-2),
                rng.gen_range(-1.0..1.0),
            ];
            let n = eval_node(&p, &s, 0.0, &mut SpeedHint::default()).unwrap();
            assert!(n.deriv[M] < 0.0);
            assert!(n.deriv[Z] >= 0.0);
            assert!((hamiltonian(&s, &n) + p.ct).abs() <= 1e-9 * (1.0 + p.ct));
        }
    }

    #[test]
    fn aborts_on_positive_lambda_x() {
        let p = Problem::new(&Scenario::nominal()).unwrap();
        let s = [0.0, 0.0, 1.4e5, 0.0, 1e-3, 0.0];
        assert!(eval_node(&p, &s, 0.0, &mut SpeedHint::default()).is_err());
    }
}
