use serde::{Deserialize, Serialize};

use crate::atmosphere::MAX_ALTITUDE;
use crate::error::{Error, Result};
use crate::hazards::EllipseHazard;
use crate::performance::AircraftModel;
use crate::windfield::WindField;

pub const SCHEMA_VERSION: u32 = 1;

/// Objective weights: J = c_t t_f + c_m m_f + ∫ g dt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    /// c_t, objective units per second.
    pub time_per_s: f64,
    /// c_m, objective units per kilogram of final mass.
    pub mass_per_kg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Endpoints {
    #[serde(default)]
    pub x0_m: f64,
    #[serde(default)]
    pub y0_m: f64,
    pub xf_m: f64,
    pub yf_m: f64,
}

impl Endpoints {
    pub fn chord(&self) -> f64 {
        (self.xf_m - self.x0_m).hypot(self.yf_m - self.y0_m)
    }

    pub fn bearing(&self) -> f64 {
        (self.yf_m - self.y0_m).atan2(self.xf_m - self.x0_m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Bounds {
    pub mach_min: f64,
    pub mach_max: f64,
    pub heading_min_rad: f64,
    pub heading_max_rad: f64,
    pub throttle_min: f64,
    pub throttle_max: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Self {
            mach_min: 0.5,
            mach_max: 0.88,
            heading_min_rad: (-85.0f64).to_radians(),
            heading_max_rad: 85.0f64.to_radians(),
            throttle_min: 0.1,
            throttle_max: 1.0,
        }
    }
}

fn schema() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "schema")]
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub aircraft: AircraftModel,
    pub altitude_m: f64,
    pub initial_mass_kg: f64,
    pub endpoints: Endpoints,
    pub weights: Weights,
    #[serde(default)]
    pub bounds: Bounds,
    #[serde(default)]
    pub wind: WindField,
    #[serde(default)]
    pub hazards: Vec<EllipseHazard>,
}

impl Scenario {
    /// Cruise at 10 km with a 140 t aircraft, no wind, no hazards.
    pub fn basic(xf: f64, yf: f64, time_weight: f64, mass_weight: f64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: String::new(),
            aircraft: AircraftModel::default(),
            altitude_m: 10_000.0,
            initial_mass_kg: 140_000.0,
            endpoints: Endpoints {
                x0_m: 0.0,
                y0_m: 0.0,
                xf_m: xf,
                yf_m: yf,
            },
            weights: Weights {
                time_per_s: time_weight,
                mass_per_kg: mass_weight,
            },
            bounds: Bounds::default(),
            wind: WindField::zero(),
            hazards: Vec::new(),
        }
    }

    /// Two oblique ellipses across the diagonal of a 1000 km square.
    pub fn nominal() -> Self {
        let xf = 1.0e6;
        let mut s = Self::basic(xf, xf, 1.0, -1.0);
        s.name = "nominal-two-ellipse".into();
        s.hazards = vec![
            EllipseHazard::soft(0.5 * xf, 0.6 * xf, 0.1 * xf, 0.3 * xf, 0.0, 1.0),
            EllipseHazard::soft(
                0.4 * xf,
                0.3 * xf,
                0.3 * xf,
                0.15 * xf,
                std::f64::consts::FRAC_PI_4,
                1.0,
            ),
        ];
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::validation(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        self.aircraft.validate()?;
        if !(0.0..=MAX_ALTITUDE).contains(&self.altitude_m) {
            return Err(Error::validation(
                "altitude_m",
                format!("must lie in [0, {MAX_ALTITUDE}]"),
            ));
        }
        let m0 = self.initial_mass_kg;
        if !(m0 > 0.0 && m0 <= self.aircraft.mtow_kg) {
            return Err(Error::validation("initial_mass_kg", "0 < m0 <= MTOW"));
        }
        let b = &self.bounds;
        if !(b.mach_min > 0.0) {
            return Err(Error::validation("bounds.mach_min", "M_min > 0"));
        }
        if !(b.mach_min < b.mach_max) {
            return Err(Error::validation("bounds.mach_min", "M_min < M_max"));
        }
        if !(b.mach_max < 1.0) {
            return Err(Error::validation("bounds.mach_max", "M_max < 1"));
        }
        if !(b.throttle_min < b.throttle_max) {
            return Err(Error::validation("bounds.throttle_min", "Pi_min < Pi_max"));
        }
        if !(b.throttle_min >= 0.0) {
            return Err(Error::validation("bounds.throttle_min", "Pi_min >= 0"));
        }
        if !(b.heading_min_rad < b.heading_max_rad) {
            return Err(Error::validation("bounds.heading_min_rad", "chi_min < chi_max"));
        }
        let w = &self.weights;
        if !(w.time_per_s.is_finite() && w.mass_per_kg.is_finite()) {
            return Err(Error::validation("weights", "must be finite"));
        }
        if w.time_per_s < 0.0 {
            return Err(Error::validation("weights.time_per_s", "c_t >= 0"));
        }
        if w.mass_per_kg > 0.0 {
            return Err(Error::validation(
                "weights.mass_per_kg",
                "c_m <= 0 (a positive weight rewards burning fuel)",
            ));
        }
        if w.time_per_s == 0.0 && w.mass_per_kg == 0.0 && self.hazards.is_empty() {
            return Err(Error::validation("weights", "objective is identically zero"));
        }
        let e = &self.endpoints;
        let finite = [e.x0_m, e.y0_m, e.xf_m, e.yf_m].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::validation("endpoints", "must be finite"));
        }
        if !(e.chord() > 0.0) {
            return Err(Error::validation("endpoints", "endpoints must be distinct"));
        }
        self.wind.validate()?;
        for (i, h) in self.hazards.iter().enumerate() {
            h.validate(i)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nominal_is_valid() {
        Scenario::nominal().validate().unwrap();
    }

    #[test]
    fn inverted_mach_bounds_rejected() {
        let mut s = Scenario::nominal();
        s.bounds.mach_min = 0.9;
        s.bounds.mach_max = 0.5;
        let e = s.validate().unwrap_err();
        assert!(e.to_string().contains("M_min < M_max"), "{e}");
    }

    #[test]
    fn other_invariants_rejected() {
        let mut s = Scenario::nominal();
        s.initial_mass_kg = 2.0e5;
        assert!(s.validate().is_err());
        let mut s = Scenario::nominal();
        s.endpoints.xf_m = 0.0;
        s.endpoints.yf_m = 0.0;
        assert!(s.validate().is_err());
        let mut s = Scenario::nominal();
        s.bounds.throttle_min = 1.0;
        assert!(s.validate().is_err());
    }
}
