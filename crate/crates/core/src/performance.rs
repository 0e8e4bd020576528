//! Drag polar, maximum thrust and fuel consumption of the reference twin-jet.
//!
//! [`Performance`] binds an [`AircraftModel`] to an ISA state so that the
//! hot loop of the solvers never re-evaluates the atmosphere. Speed and mass
//! derivatives are closed-form.

use serde::{Deserialize, Serialize};

use crate::atmosphere::{isa_state, AtmosphereState, G, KAPPA, P0, THETA0};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AircraftModel {
    pub wing_area_m2: f64,
    pub mtow_kg: f64,
    pub max_fuel_kg: f64,
    pub thrust_ref_n: f64,
    pub sfc_ref_kg_per_ns: f64,
    /// (C_D0i, C_D1i, C_D2i)
    pub cd_incompressible: [f64; 3],
    /// Row j multiplies C_L^j; column p-1 multiplies K̄^p.
    pub k_compressible: [[f64; 5]; 3],
}

impl Default for AircraftModel {
    fn default() -> Self {
        Self {
            wing_area_m2: 283.3,
            mtow_kg: 186_880.0,
            max_fuel_kg: 73_635.0,
            thrust_ref_n: 5.0e5,
            sfc_ref_kg_per_ns: 9.0e-6,
            cd_incompressible: [0.01322, -0.00610, 0.06000],
            k_compressible: [
                [0.0067, -0.1861, 2.2420, -6.4350, 6.3428],
                [0.0962, -0.7602, -1.2870, 3.7925, -2.7672],
                [-0.1317, 1.3427, -1.2839, 5.0164, 0.0],
            ],
        }
    }
}

impl AircraftModel {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, field: &str, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::validation(field, msg))
            }
        };
        check(self.wing_area_m2 > 0.0, "aircraft.wing_area_m2", "must be > 0")?;
        check(self.thrust_ref_n > 0.0, "aircraft.thrust_ref_n", "must be > 0")?;
        check(
            self.sfc_ref_kg_per_ns > 0.0,
            "aircraft.sfc_ref_kg_per_ns",
            "must be > 0",
        )?;
        check(
            self.max_fuel_kg > 0.0 && self.max_fuel_kg < self.mtow_kg,
            "aircraft.max_fuel_kg",
            "0 < max_fuel < mtow",
        )?;
        let finite = self.cd_incompressible.iter().all(|c| c.is_finite())
            && self.k_compressible.iter().flatten().all(|c| c.is_finite());
        check(finite, "aircraft", "coefficients must be finite")
    }
}

/// Compressibility factor K̄(M).
pub fn compressibility_kbar(mach: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&mach) {
        return Err(Error::OutOfRange {
            what: "Mach",
            value: mach,
            lo: 0.0,
            hi: 1.0,
        });
    }
    Ok(kbar(mach).0)
}

/// K̄ and dK̄/dM.
fn kbar(m: f64) -> (f64, f64) {
    if m < 0.4 {
        return (0.0, 0.0);
    }
    let d = m - 0.4;
    let w = 1.0 - m * m;
    let sw = w.sqrt();
    (d * d / sw, 2.0 * d / sw + d * d * m / (w * sw))
}

/// Everything the solvers need at one (m, v) point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerfPoint {
    pub mach: f64,
    pub cl: f64,
    pub cd: f64,
    pub drag: f64,
    pub drag_v: f64,
    pub drag_m: f64,
    pub thrust_max: f64,
    pub thrust_max_v: f64,
    pub sfc: f64,
    pub sfc_v: f64,
    /// dm/dt = -C_s D
    pub fm: f64,
    pub fm_v: f64,
    pub fm_m: f64,
}

impl PerfPoint {
    pub fn throttle(&self) -> f64 {
        self.drag / self.thrust_max
    }

    pub fn throttle_v(&self) -> f64 {
        (self.drag_v * self.thrust_max - self.drag * self.thrust_max_v)
            / (self.thrust_max * self.thrust_max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Performance {
    pub model: AircraftModel,
    pub altitude: f64,
    pub atm: AtmosphereState,
    pressure_ratio: f64,
    sqrt_theta_ratio: f64,
}

impl Performance {
    pub fn new(model: AircraftModel, altitude: f64) -> Result<Self> {
        model.validate()?;
        let atm = isa_state(altitude)?;
        Ok(Self {
            pressure_ratio: atm.pressure * THETA0 / (P0 * atm.temperature),
            sqrt_theta_ratio: (atm.temperature / THETA0).sqrt(),
            model,
            altitude,
            atm,
        })
    }

    pub fn speed_of_mach(&self, mach: f64) -> f64 {
        mach * self.atm.sound_speed
    }

    fn check(&self, mass: f64, speed: f64) -> Result<()> {
        if !(mass > 0.0) {
            return Err(Error::Domain(format!("mass must be > 0, got {mass}")));
        }
        if !(speed > 0.0) {
            return Err(Error::Domain(format!("speed must be > 0, got {speed}")));
        }
        let mach = speed / self.atm.sound_speed;
        if mach >= 1.0 {
            return Err(Error::OutOfRange {
                what: "Mach",
                value: mach,
                lo: 0.0,
                hi: 1.0,
            });
        }
        Ok(())
    }

    pub fn drag(&self, mass: f64, speed: f64) -> Result<f64> {
        self.check(mass, speed)?;
        Ok(self.eval(mass, speed).drag)
    }

    pub fn thrust_max(&self, speed: f64) -> Result<f64> {
        self.check(1.0, speed)?;
        Ok(self.thrust(speed).0)
    }

    pub fn sfc(&self, speed: f64) -> Result<f64> {
        if !(speed >= 0.0) || speed >= self.atm.sound_speed {
            return Err(Error::Domain(format!("speed {speed} outside [0, a)")));
        }
        Ok(self.sfc_pair(speed).0)
    }

    pub fn throttle_required(&self, mass: f64, speed: f64) -> Result<f64> {
        self.check(mass, speed)?;
        Ok(self.eval(mass, speed).throttle())
    }

    fn thrust(&self, v: f64) -> (f64, f64) {
        let a = self.atm.sound_speed;
        let m = v / a;
        let e = KAPPA / (KAPPA - 1.0);
        let c = 0.5 * (KAPPA - 1.0);
        let base = 1.0 + c * m * m;
        let ram = base.powf(e);
        let sm = m.sqrt();
        let lapse = 1.0 - 0.49 * sm;
        let k = self.pressure_ratio * self.model.thrust_ref_n;
        let d_ram = e * base.powf(e - 1.0) * 2.0 * c * m;
        let d_lapse = if sm > 0.0 { -0.245 / sm } else { f64::NEG_INFINITY };
        (k * ram * lapse, k * (d_ram * lapse + ram * d_lapse) / a)
    }

    fn sfc_pair(&self, v: f64) -> (f64, f64) {
        let a = self.atm.sound_speed;
        let k = self.model.sfc_ref_kg_per_ns * self.sqrt_theta_ratio;
        (k * (1.0 + 1.2 * v / a), k * 1.2 / a)
    }

    /// Unchecked evaluation; callers keep 0 < v < a and m > 0.
    pub fn eval(&self, mass: f64, v: f64) -> PerfPoint {
        let a = self.atm.sound_speed;
        let rho = self.atm.density;
        let s = self.model.wing_area_m2;
        let mach = v / a;
        let (kb, kb_m) = kbar(mach);
        let kb_v = kb_m / a;

        let mut coef = [0.0; 3];
        let mut coef_k = [0.0; 3];
        for j in 0..3 {
            let row = &self.model.k_compressible[j];
            let mut c = 0.0;
            let mut dc = 0.0;
            // Horner on Σ_{p=1..5} k_p K^p
            for p in (0..5).rev() {
                c = (c + row[p]) * kb;
                dc = dc * kb + (p as f64 + 1.0) * row[p];
            }
            // dc above accumulates Σ p k_p K^{p-1}
            coef[j] = self.model.cd_incompressible[j] + c;
            coef_k[j] = dc;
        }

        let qd = 0.5 * rho * v * v * s;
        let cl = mass * G / qd;
        let cd = coef[0] + coef[1] * cl + coef[2] * cl * cl;
        let cd_cl = coef[1] + 2.0 * coef[2] * cl;
        let cd_k = coef_k[0] + coef_k[1] * cl + coef_k[2] * cl * cl;
        let cd_v = cd_k * kb_v + cd_cl * (-2.0 * cl / v);
        let cd_m = cd_cl * cl / mass;

        let drag = qd * cd;
        let drag_v = rho * v * s * cd + qd * cd_v;
        let drag_m = qd * cd_m;

        let (thrust_max, thrust_max_v) = self.thrust(v);
        let (sfc, sfc_v) = self.sfc_pair(v);

        PerfPoint {
            mach,
            cl,
            cd,
            drag,
            drag_v,
            drag_m,
            thrust_max,
            thrust_max_v,
            sfc,
            sfc_v,
            fm: -sfc * drag,
            fm_v: -(sfc_v * drag + sfc * drag_v),
            fm_m: -sfc * drag_m,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn perf(h: f64) -> Performance {
        Performance::new(AircraftModel::default(), h).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn kbar_values() {
        assert_eq!(compressibility_kbar(0.3).unwrap(), 0.0);
        assert_eq!(compressibility_kbar(0.4).unwrap(), 0.0);
        assert!((compressibility_kbar(0.8).unwrap() - 0.16 / 0.6).abs() < 1e-14);
        assert!(compressibility_kbar(1.0).is_err());
    }

    #[test]
    fn kbar_derivative_fd() {
        for i in 0..50 {
            let m = 0.41 + 0.5 * i as f64 / 50.0;
            let h = 1e-6;
            let fd = (kbar(m + h).0 - kbar(m - h).0) / (2.0 * h);
            assert!(rel(kbar(m).1, fd) < 1e-6, "M={m}");
        }
    }

    // Reference values from an independent numpy evaluation of the drag,
    // thrust and fuel-flow formulas with the tabulated constants.
    #[test]
    fn golden_point() {
        let p = perf(10_000.0);
        let pt = p.eval(140_000.0, 230.0);
        assert!(rel(pt.drag, 73_508.779_753_437_86) < 1e-12);
        assert!(rel(pt.thrust_max, 141_932.052_125_700_25) < 1e-12);
        assert!(rel(pt.sfc, 1.521_985_210_726_070_9e-5) < 1e-12);
        assert!(rel(pt.throttle(), 0.517_915_288_706_850_9) < 1e-12);
        assert!(rel(p.throttle_required(140_000.0, 230.0).unwrap(), 0.517_915_288_706_850_9) < 1e-12);
    }

    #[test]
    fn low_mach_collapses_to_incompressible() {
        let p = perf(0.0);
        let m = 100_000.0;
        let v = 0.35 * p.atm.sound_speed;
        let pt = p.eval(m, v);
        let cl = 2.0 * m * G / (p.atm.density * 283.3 * v * v);
        let cd = 0.01322 - 0.00610 * cl + 0.06 * cl * cl;
        assert!(rel(pt.cd, cd) < 1e-14);
    }

    #[test]
    fn thrust_limits_and_altitude_lapse() {
        let p0 = perf(0.0);
        assert!(rel(p0.thrust(1e-9).0, 5.0e5) < 1e-5);
        for v in [150.0, 200.0, 250.0] {
            assert!(perf(11_000.0).thrust_max(v).unwrap() < perf(9_000.0).thrust_max(v).unwrap());
        }
        assert_eq!(p0.sfc(0.0).unwrap(), 9.0e-6);
    }

    #[test]
    fn drag_scales_with_dynamic_pressure() {
        let p = perf(10_000.0);
        let (m, v) = (140_000.0, 230.0);
        let pt = p.eval(m, v);
        let qd = 0.5 * p.atm.density * v * v * 283.3;
        assert!(rel(pt.drag, qd * pt.cd) < 1e-14);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = perf(10_000.0);
        assert!(p.drag(-1.0, 200.0).is_err());
        assert!(p.drag(1.0, 0.0).is_err());
        assert!(p.drag(1.0, 400.0).is_err());
    }

    #[test]
    fn analytic_derivatives_match_central_differences() {
        for h in [9_000.0, 10_000.0, 11_000.0] {
            let p = perf(h);
            for mi in 0..6 {
                let m = (0.55 + 0.09 * mi as f64) * 186_880.0;
                for vi in 0..12 {
                    let v = p.speed_of_mach(0.31 + 0.05 * vi as f64);
                    let pt = p.eval(m, v);
                    let dv = 1e-6 * v;
                    let (a, b) = (p.eval(m, v + dv), p.eval(m, v - dv));
                    let fd = |f: fn(&PerfPoint) -> f64| (f(&a) - f(&b)) / (2.0 * dv);
                    assert!(rel(pt.drag_v, fd(|q| q.drag)) < 1e-6, "D_v h={h} m={m} v={v}");
                    assert!(rel(pt.thrust_max_v, fd(|q| q.thrust_max)) < 1e-6);
                    assert!(rel(pt.sfc_v, fd(|q| q.sfc)) < 1e-6);
                    assert!(rel(pt.fm_v, fd(|q| q.fm)) < 1e-6);
                    assert!(rel(pt.throttle_v(), fd(|q| q.throttle())) < 1e-6);
                    let dm = 1e-6 * m;
                    let (a, b) = (p.eval(m + dm, v), p.eval(m - dm, v));
                    assert!(rel(pt.drag_m, (a.drag - b.drag) / (2.0 * dm)) < 1e-6);
                    assert!(rel(pt.fm_m, (a.fm - b.fm) / (2.0 * dm)) < 1e-6);
                }
            }
        }
    }

    fn envelope(mut f: impl FnMut(&Performance, f64, f64)) {
        for h in [9_000.0, 10_000.0, 11_000.0] {
            let p = perf(h);
            for mi in 0..=20 {
                let m = (0.55 + 0.45 * mi as f64 / 20.0) * 186_880.0;
                for vi in 0..=40 {
                    let v = p.speed_of_mach(0.5 + 0.38 * vi as f64 / 40.0);
                    f(&p, m, v);
                }
            }
        }
    }

    #[test]
    fn envelope_sign_structure() {
        envelope(|p, m, v| {
            let pt = p.eval(m, v);
            assert!(pt.fm < 0.0);
            assert!(pt.sfc_v > 0.0);
            let dv = 1e-3 * v;
            let fvv = (p.eval(m, v + dv).fm - 2.0 * pt.fm + p.eval(m, v - dv).fm) / (dv * dv);
            assert!(fvv < 0.0, "F_m,vv >= 0 at m={m} v={v}");
        });
    }

    #[test]
    fn drag_increases_above_minimum_drag_speed() {
        envelope(|p, m, v| {
            // locate the minimum-drag speed on a fine scan
            let mut vmd = 0.0;
            let mut dmin = f64::INFINITY;
            for k in 0..=400 {
                let u = p.speed_of_mach(0.3 + 0.6 * k as f64 / 400.0);
                let d = p.eval(m, u).drag;
                if d < dmin {
                    dmin = d;
                    vmd = u;
                }
            }
            if v > vmd + 2.0 {
                assert!(p.eval(m, v).drag_v > 0.0);
            }
        });
    }
}
