use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::rk3_step_try;

use super::control::{Arc, SpeedHint};
use super::dynamics::{eval_node, hamiltonian, NodeEval, State, LX, M, Q, X, Y, Z};
use super::problem::Problem;

pub const DEFAULT_STEPS: usize = 300;

/// Unknown initial values of the boundary-value problem, in the working
/// frame (target on the positive x-axis).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingParams {
    pub lambda_x0: f64,
    pub chi0: f64,
    pub tf: f64,
}

impl ShootingParams {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.lambda_x0, self.chi0, self.tf]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            lambda_x0: v[0],
            chi0: v[1],
            tf: v[2],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tf > 0.0) || !self.tf.is_finite() {
            return Err(Error::Domain(format!("final time must be > 0, got {}", self.tf)));
        }
        if !(self.chi0.abs() < std::f64::consts::FRAC_PI_2) {
            return Err(Error::Domain(format!("|chi0| must be < pi/2, got {}", self.chi0)));
        }
        if !self.lambda_x0.is_finite() {
            return Err(Error::Domain("lambda_x0 must be finite".into()));
        }
        Ok(())
    }
}

/// One trajectory node, in the scenario frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub m: f64,
    pub z: f64,
    pub v: f64,
    pub chi: f64,
    /// λy/λx; equals tan χ off heading bounds.
    pub q: f64,
    pub lambda_x: f64,
    pub lambda_y: f64,
    pub lambda_m: f64,
    pub hamiltonian: f64,
    pub throttle: f64,
    pub arc: Arc,
    /// ∂H/∂v at the node.
    pub switching: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub nodes: Vec<Node>,
    /// Working-frame states, one per node.
    #[serde(skip)]
    pub states: Vec<State>,
}

impl Trajectory {
    pub fn last(&self) -> &Node {
        self.nodes.last().expect("trajectory has nodes")
    }

    pub fn tf(&self) -> f64 {
        self.last().t
    }

    /// Number of arc-label changes along the trajectory.
    pub fn arc_switches(&self) -> usize {
        self.nodes.windows(2).filter(|w| w[0].arc != w[1].arc).count()
    }

    /// Largest relative jump of λm between consecutive nodes where the
    /// arc label changes (junction monitor; no jump conditions applied).
    pub fn lambda_m_junction_jump(&self) -> f64 {
        self.nodes
            .windows(2)
            .filter(|w| w[0].arc != w[1].arc)
            .map(|w| (w[1].lambda_m - w[0].lambda_m).abs() / w[0].lambda_m.abs().max(1e-300))
            .fold(0.0, f64::max)
    }
}

pub fn initial_state(p: &Problem, params: &ShootingParams) -> State {
    [0.0, 0.0, p.m0, 0.0, params.lambda_x0, params.chi0.tan()]
}

/// Integrate the working-frame state over [0, tf] with `steps` RK3 steps.
pub fn integrate_states(p: &Problem, params: &ShootingParams, steps: usize) -> Result<Vec<State>> {
    params.validate()?;
    if steps == 0 {
        return Err(Error::Domain("steps must be >= 1".into()));
    }
    let h = params.tf / steps as f64;
    let mut hint = SpeedHint::default();
    let mut rhs = |t: f64, s: &State| -> Result<State> { Ok(eval_node(p, s, t, &mut hint)?.deriv) };
    let mut s = initial_state(p, params);
    let mut out = Vec::with_capacity(steps + 1);
    out.push(s);
    for k in 0..steps {
        s = rk3_step_try(&mut rhs, k as f64 * h, &s, h)?;
        out.push(s);
    }
    // validate the terminal node as well
    eval_node(p, &s, params.tf, &mut hint)?;
    Ok(out)
}

pub fn node_from_state(p: &Problem, t: f64, s: &State, n: &NodeEval) -> Node {
    let f = &p.frame;
    let (x, y) = f.point_out(s[X], s[Y]);
    let (lx, ly) = f.vec_out(s[LX], s[Q] * s[LX]);
    Node {
        t,
        x,
        y,
        m: s[M],
        z: s[Z],
        v: n.law.v,
        chi: n.chi + f.theta,
        q: ly / lx,
        lambda_x: lx,
        lambda_y: ly,
        lambda_m: n.law.lambda_m,
        hamiltonian: hamiltonian(s, n),
        throttle: n.law.perf.throttle(),
        arc: n.arc(),
        switching: n.law.switching,
    }
}

/// Full trajectory with controls and derived costates at every node.
pub fn integrate_trajectory(p: &Problem, params: &ShootingParams, steps: usize) -> Result<Trajectory> {
    let states = integrate_states(p, params, steps)?;
    let h = params.tf / steps as f64;
    let mut hint = SpeedHint::default();
    let mut nodes = Vec::with_capacity(states.len());
    for (k, s) in states.iter().enumerate() {
        let t = k as f64 * h;
        let n = eval_node(p, s, t, &mut hint)?;
        nodes.push(node_from_state(p, t, s, &n));
    }
    Ok(Trajectory { nodes, states })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocp::scenario::Scenario;
    use crate::windfield::{WindField, WindPrimitive};

    #[test]
    fn straight_line_min_time() {
        let xf = 8.0e5;
        let mut sc = Scenario::basic(xf, xf, 1.0, 0.0);
        // light enough that M_max is reachable within the throttle bound
        sc.initial_mass_kg = 1.15e5;
        let p = Problem::new(&sc).unwrap();
        let tf = p.length / p.v_max;
        let params = ShootingParams {
            lambda_x0: -1.0 / p.v_max,
            chi0: 0.0,
            tf,
        };
        let tr = integrate_trajectory(&p, &params, 300).unwrap();
        let e = tr.last();
        assert!((e.x - xf).abs() < 1e-6 && (e.y - xf).abs() < 1e-6);
        assert!(tr.nodes.iter().all(|n| n.v == p.v_max));
        assert!((tr.nodes[0].chi - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        // min-time: λm vanishes along the extremal with λx = −c_t / v
        assert!(e.lambda_m.abs() < 1e-12);
    }

    #[test]
    fn mass_stays_within_fuel_capacity() {
        let sc = Scenario::basic(1.0e6, 2.0e5, 1.0, -1.0);
        let p = Problem::new(&sc).unwrap();
        let params = ShootingParams {
            lambda_x0: -1.0e-2,
            chi0: 0.1,
            tf: 5000.0,
        };
        let tr = integrate_trajectory(&p, &params, 200).unwrap();
        for w in tr.nodes.windows(2) {
            assert!(w[1].m < w[0].m);
        }
        assert!(tr.last().m > p.m0 - sc.aircraft.max_fuel_kg);
        assert!(tr.nodes.iter().all(|n| n.m <= p.m0));
    }

    #[test]
    fn observed_order_near_three_per_step() {
        let mut sc = Scenario::basic(1.0e6, 2.0e5, 1.0, -1.0);
        sc.wind = WindField::new(vec![
            WindPrimitive::Uniform { u_mps: 6.0, v_mps: 2.0 },
            WindPrimitive::Vortex { gamma_m2ps: 2.0e7, x_m: 5.0e5, y_m: 3.0e5, radius_m: 2.0e5 },
        ]);
        let p = Problem::new(&sc).unwrap();
        let params = ShootingParams {
            lambda_x0: -9.5e-3,
            chi0: 0.05,
            tf: 4000.0,
        };
        let end = |n: usize| {
            let s = integrate_states(&p, &params, n).unwrap();
            let e = s.last().unwrap();
            (e[X], e[Y])
        };
        let (a, b, c) = (end(25), end(50), end(100));
        let d1 = (a.0 - b.0).hypot(a.1 - b.1);
        let d2 = (b.0 - c.0).hypot(b.1 - c.1);
        let order = (d1 / d2).log2();
        assert!(order >= 2.7, "observed order {order}");
    }
}
