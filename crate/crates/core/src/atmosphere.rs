//! ISA troposphere at a fixed altitude.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const P0: f64 = 101_325.0;
pub const THETA0: f64 = 288.15;
pub const BETA: f64 = 0.0065;
pub const R_AIR: f64 = 287.04;
pub const KAPPA: f64 = 1.4;
pub const G: f64 = 9.81;

pub const MAX_ALTITUDE: f64 = 20_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtmosphereState {
    pub temperature: f64,
    pub pressure: f64,
    pub density: f64,
    pub sound_speed: f64,
}

pub fn isa_state(altitude: f64) -> Result<AtmosphereState> {
    if !(0.0..=MAX_ALTITUDE).contains(&altitude) {
        return Err(Error::OutOfRange {
            what: "altitude [m]",
            value: altitude,
            lo: 0.0,
            hi: MAX_ALTITUDE,
        });
    }
    let temperature = THETA0 - BETA * altitude;
    let pressure = P0 * (temperature / THETA0).powf(G / (BETA * R_AIR));
    let density = pressure / (R_AIR * temperature);
    let sound_speed = (KAPPA * R_AIR * temperature).sqrt();
    Ok(AtmosphereState {
        temperature,
        pressure,
        density,
        sound_speed,
    })
}
