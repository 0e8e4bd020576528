//! Closed-form minimum-time solution in a constant wind.

use crate::error::{Error, Result};

/// Heading χ0 (scenario frame) and final time for the constant-wind
/// minimum-time problem from the origin to (xf, yf) at airspeed `v_max`.
///
/// The ground track is the chord; the heading cancels the crosswind
/// component: χ0 = φ − asin(w⊥ / v_max), with φ the chord bearing.
pub fn analytic_min_time_constant_wind(xf: f64, yf: f64, wx: f64, wy: f64, v_max: f64) -> Result<(f64, f64)> {
    let l = xf.hypot(yf);
    if !(l > 0.0) || !l.is_finite() {
        return Err(Error::Domain("target must differ from the origin".into()));
    }
    if !(v_max > 0.0) {
        return Err(Error::Domain(format!("v_max must be positive, got {v_max}")));
    }
    let wn = wx.hypot(wy);
    if !(wn < v_max) {
        return Err(Error::Domain(format!("wind speed {wn:.3} m/s is not below v_max {v_max:.3} m/s")));
    }
    let (s, c) = (yf / l, xf / l);
    let w_perp = -wx * s + wy * c;
    let w_par = wx * c + wy * s;
    let delta = (w_perp / v_max).asin();
    let ground = v_max * delta.cos() + w_par;
    if !(ground > 0.0) {
        return Err(Error::Domain("wind leaves no positive ground speed along the chord".into()));
    }
    Ok((yf.atan2(xf) - delta, l / ground))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_4;

    /// The arccos form, valid for xf > 0 and yf > 0.
    fn arccos_form(xf: f64, yf: f64, wx: f64, wy: f64, v: f64) -> (f64, f64) {
        let chi = -(xf / yf).atan() + ((xf * wy - yf * wx) / (v * xf.hypot(yf))).acos();
        (chi, xf / (v * chi.cos() + wx))
    }

    #[test]
    fn no_wind_symmetric() {
        let (chi, tf) = analytic_min_time_constant_wind(1e6, 1e6, 0.0, 0.0, 250.0).unwrap();
        assert!((chi - FRAC_PI_4).abs() < 1e-15);
        assert!((tf - 2f64.sqrt() * 1e6 / 250.0).abs() < 1e-9);
    }

    #[test]
    fn strong_wind_rejected() {
        assert!(analytic_min_time_constant_wind(1e6, 0.0, 0.0, 300.0, 250.0).is_err());
        assert!(analytic_min_time_constant_wind(0.0, 0.0, 0.0, 0.0, 250.0).is_err());
    }

    proptest! {
        #[test]
        fn agrees_with_arccos_form(
            xf in 1e5f64..2e6, yf in 1e5f64..2e6,
            wx in -50.0f64..50.0, wy in -50.0f64..50.0,
        ) {
            let v = 250.0;
            let (chi, tf) = analytic_min_time_constant_wind(xf, yf, wx, wy, v).unwrap();
            let (chi_r, tf_r) = arccos_form(xf, yf, wx, wy, v);
            prop_assert!((chi - chi_r).abs() < 1e-12);
            prop_assert!((tf - tf_r).abs() < 1e-9 * tf);
        }

        #[test]
        fn ground_track_hits_target(
            xf in -2e6f64..2e6, yf in -2e6f64..2e6,
            wx in -50.0f64..50.0, wy in -50.0f64..50.0,
        ) {
            prop_assume!(xf.hypot(yf) > 1e4);
            let v = 240.0;
            let (chi, tf) = analytic_min_time_constant_wind(xf, yf, wx, wy, v).unwrap();
            let x = (v * chi.cos() + wx) * tf;
            let y = (v * chi.sin() + wy) * tf;
            prop_assert!((x - xf).abs() < 1e-6 && (y - yf).abs() < 1e-6);
        }
    }
}
