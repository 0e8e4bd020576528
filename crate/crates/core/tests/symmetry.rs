use std::f64::consts::FRAC_PI_2;

use cruise_core::hazards::EllipseHazard;
use cruise_core::ocp::{solve, Scenario, SolverConfig};
use cruise_core::windfield::{WindField, WindPrimitive};

fn mirror(s: &Scenario) -> Scenario {
    let mut m = s.clone();
    let e = &mut m.endpoints;
    (e.x0_m, e.y0_m, e.xf_m, e.yf_m) = (e.y0_m, e.x0_m, e.yf_m, e.xf_m);
    m.hazards = s
        .hazards
        .iter()
        .map(|h| EllipseHazard {
            center_x_m: h.center_y_m,
            center_y_m: h.center_x_m,
            orientation_rad: FRAC_PI_2 - h.orientation_rad,
            ..*h
        })
        .collect();
    m.wind = WindField::new(
        s.wind
            .primitives
            .iter()
            .map(|p| match *p {
                // reflection reverses the sense of rotation
                WindPrimitive::Vortex { gamma_m2ps, x_m, y_m, radius_m } => WindPrimitive::Vortex {
                    gamma_m2ps: -gamma_m2ps,
                    x_m: y_m,
                    y_m: x_m,
                    radius_m,
                },
                WindPrimitive::Uniform { u_mps, v_mps } => WindPrimitive::Uniform { u_mps: v_mps, v_mps: u_mps },
                other => other,
            })
            .collect(),
    );
    m
}

#[test]
fn mirrored_scenario_gives_mirrored_solution() {
    let mut s = Scenario::basic(9e5, 6e5, 1.0, -1.0);
    s.hazards = vec![EllipseHazard::soft(5e5, 2.5e5, 1.2e5, 6e4, 0.4, 1.0)];
    s.wind = WindField::new(vec![
        WindPrimitive::Uniform { u_mps: 8.0, v_mps: -3.0 },
        WindPrimitive::Vortex { gamma_m2ps: 1.2e7, x_m: 3e5, y_m: 4e5, radius_m: 1.5e5 },
    ]);
    let a = solve(&s, &SolverConfig::default()).unwrap();
    let b = solve(&mirror(&s), &SolverConfig::default()).unwrap();
    assert!(a.converged() && b.converged());
    assert!((a.objective - b.objective).abs() <= 1e-7 * a.objective.abs(), "{} {}", a.objective, b.objective);
    let (ta, tb) = (a.trajectory.unwrap(), b.trajectory.unwrap());
    for (p, q) in ta.nodes.iter().zip(&tb.nodes) {
        assert!((p.x - q.y).abs() < 1.0 && (p.y - q.x).abs() < 1.0);
        assert!((p.v - q.v).abs() < 1e-6);
    }
}
