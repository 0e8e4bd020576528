//! A validated scenario compiled for the solvers: performance tables bound to
//! the cruise altitude and a working frame in which the target lies on the
//! positive x-axis.

use crate::error::{Error, Result};
use crate::hazards::penalty;
use crate::performance::{PerfPoint, Performance};
use crate::windfield::WindSample;

use super::scenario::Scenario;

/// Rigid map between the scenario frame and the working frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub x0: f64,
    pub y0: f64,
    pub theta: f64,
    cos: f64,
    sin: f64,
}

impl Frame {
    pub fn new(x0: f64, y0: f64, theta: f64) -> Self {
        let (sin, cos) = theta.sin_cos();
        Self {
            x0,
            y0,
            theta,
            cos,
            sin,
        }
    }

    /// Rotate a working-frame vector into the scenario frame.
    pub fn vec_out(&self, u: f64, v: f64) -> (f64, f64) {
        (self.cos * u - self.sin * v, self.sin * u + self.cos * v)
    }

    /// Rotate a scenario-frame vector into the working frame.
    pub fn vec_in(&self, u: f64, v: f64) -> (f64, f64) {
        (self.cos * u + self.sin * v, -self.sin * u + self.cos * v)
    }

    pub fn point_out(&self, x: f64, y: f64) -> (f64, f64) {
        let (u, v) = self.vec_out(x, y);
        (self.x0 + u, self.y0 + v)
    }

    pub fn point_in(&self, x: f64, y: f64) -> (f64, f64) {
        self.vec_in(x - self.x0, y - self.y0)
    }
}

/// Wind and penalty at one working-frame point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Env {
    pub wind: WindSample,
    pub g: f64,
    pub gx: f64,
    pub gy: f64,
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub scenario: Scenario,
    pub perf: Performance,
    pub frame: Frame,
    /// Chord length; the target is (length, 0) in the working frame.
    pub length: f64,
    pub v_min: f64,
    pub v_max: f64,
    /// Heading bounds in the working frame.
    pub chi_min: f64,
    pub chi_max: f64,
    pub ct: f64,
    pub cm: f64,
    pub m0: f64,
    /// Scales the hazard penalty (continuation parameter, 1 = scenario).
    pub hazard_scale: f64,
}

/// Heading magnitude at which integration aborts.
pub const CHI_ABORT: f64 = 89.0 * std::f64::consts::PI / 180.0;

impl Problem {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let perf = Performance::new(scenario.aircraft.clone(), scenario.altitude_m)?;
        let e = scenario.endpoints;
        let theta = e.bearing();
        let frame = Frame::new(e.x0_m, e.y0_m, theta);
        let b = scenario.bounds;
        let chi_min = b.heading_min_rad - theta;
        let chi_max = b.heading_max_rad - theta;
        let lo = chi_min.max(-CHI_ABORT);
        let hi = chi_max.min(CHI_ABORT);
        if !(lo < hi) {
            return Err(Error::validation(
                "bounds.heading_min_rad",
                format!(
                    "heading bounds exclude every direction within 89 deg of the chord bearing {:.2} deg",
                    theta.to_degrees()
                ),
            ));
        }
        Ok(Self {
            perf: perf.clone(),
            frame,
            length: e.chord(),
            v_min: perf.speed_of_mach(b.mach_min),
            v_max: perf.speed_of_mach(b.mach_max),
            chi_min: lo,
            chi_max: hi,
            ct: scenario.weights.time_per_s,
            cm: scenario.weights.mass_per_kg,
            m0: scenario.initial_mass_kg,
            hazard_scale: 1.0,
            scenario: scenario.clone(),
        })
    }

    pub fn with_hazard_scale(&self, s: f64) -> Self {
        let mut p = self.clone();
        p.hazard_scale = s;
        p
    }

    pub fn min_mass(&self) -> f64 {
        self.m0 - self.scenario.aircraft.max_fuel_kg
    }

    pub fn perf_at(&self, m: f64, v: f64) -> PerfPoint {
        self.perf.eval(m, v)
    }

    /// Wind, wind Jacobian and penalty with gradient in the working frame.
    pub fn env(&self, x: f64, y: f64) -> Env {
        let (px, py) = self.frame.point_out(x, y);
        let w = self.scenario.wind.sample(px, py);
        let f = &self.frame;
        let (wx, wy) = f.vec_in(w.wx, w.wy);
        // J' = R(-θ) J R(θ)
        let (c, s) = (f.cos, f.sin);
        let (a, b, cc, d) = (w.wx_x, w.wx_y, w.wy_x, w.wy_y);
        let (jr00, jr01) = (a * c + b * s, -a * s + b * c);
        let (jr10, jr11) = (cc * c + d * s, -cc * s + d * c);
        let wind = WindSample {
            wx,
            wy,
            wx_x: c * jr00 + s * jr10,
            wx_y: c * jr01 + s * jr11,
            wy_x: -s * jr00 + c * jr10,
            wy_y: -s * jr01 + c * jr11,
        };
        if self.scenario.hazards.is_empty() || self.hazard_scale == 0.0 {
            return Env {
                wind,
                ..Default::default()
            };
        }
        let p = penalty(&self.scenario.hazards, px, py);
        let (gx, gy) = f.vec_in(p.gx, p.gy);
        let k = self.hazard_scale;
        Env {
            wind,
            g: k * p.g,
            gx: k * gx,
            gy: k * gy,
        }
    }
}
