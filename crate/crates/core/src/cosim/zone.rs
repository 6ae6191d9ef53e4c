use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Volumetric heat capacity of air, J/(m3 K).
pub const RHO_CP_AIR: f64 = 1206.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZoneParams {
    /// J/K
    pub capacitance: f64,
    /// Envelope conductance to outdoors, W/K.
    pub ua: f64,
    /// Conductance to the neighboring rooms, W/K.
    pub ua_internal: f64,
    /// m3
    pub volume: f64,
    /// Air changes per hour with closed windows.
    pub n_closed: f64,
    /// Air changes per hour with an open window.
    pub n_open: f64,
    pub neighbor_temp: f64,
    /// W
    pub radiator_capacity: f64,
    pub radiator_setpoint: f64,
    /// Proportional band of the radiator controller, K.
    pub radiator_band: f64,
    /// W per person.
    pub person_heat: f64,
    /// m3/h per person.
    pub person_co2: f64,
    /// W while occupied.
    pub pc_gain: f64,
    pub outdoor_co2: f64,
    /// Effective solar aperture, m2 (global radiation times aperture gives W).
    pub solar_aperture: f64,
}

impl Default for ZoneParams {
    fn default() -> Self {
        Self {
            capacitance: 2.0e6,
            ua: 30.0,
            ua_internal: 50.0,
            volume: 45.0,
            n_closed: 0.5,
            n_open: 8.0,
            neighbor_temp: 20.0,
            radiator_capacity: 1000.0,
            radiator_setpoint: 21.0,
            radiator_band: 1.0,
            person_heat: 100.0,
            person_co2: 0.0048,
            pc_gain: 150.0,
            outdoor_co2: 400.0,
            solar_aperture: 0.5,
        }
    }
}

impl ZoneParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("capacitance", self.capacitance),
            ("ua", self.ua),
            ("volume", self.volume),
            ("n_open", self.n_open),
            ("radiator_band", self.radiator_band),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("zone parameter {name} must be positive")));
            }
        }
        let non_negative = [
            ("ua_internal", self.ua_internal),
            ("n_closed", self.n_closed),
            ("radiator_capacity", self.radiator_capacity),
            ("person_heat", self.person_heat),
            ("person_co2", self.person_co2),
            ("pc_gain", self.pc_gain),
            ("outdoor_co2", self.outdoor_co2),
            ("solar_aperture", self.solar_aperture),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("zone parameter {name} must be non-negative")));
            }
        }
        if !(self.neighbor_temp.is_finite() && self.radiator_setpoint.is_finite()) {
            return Err(Error::Config("zone temperatures must be finite".into()));
        }
        if self.n_open <= self.n_closed {
            return Err(Error::Config("n_open must exceed n_closed".into()));
        }
        Ok(())
    }

    pub fn air_change(&self, window_open: bool) -> f64 {
        if window_open {
            self.n_open
        } else {
            self.n_closed
        }
    }

    pub fn radiator_output(&self, temp: f64) -> f64 {
        self.radiator_capacity * ((self.radiator_setpoint - temp) / self.radiator_band).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoneState {
    pub temp: f64,
    pub co2: f64,
    pub window_open: bool,
    pub timestamp: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Boundary {
    pub outdoor_temp: f64,
    /// Number of persons present.
    pub occupants: f64,
    /// W
    pub solar_gain: f64,
}

/// Equilibrium temperature and inverse time constant (1/s) of the step's
/// linear heat balance, with the radiator frozen at its start-of-step output.
pub fn thermal_coefficients(state: &ZoneState, params: &ZoneParams, boundary: &Boundary) -> (f64, f64) {
    let vent = RHO_CP_AIR * params.volume * params.air_change(state.window_open) / 3600.0;
    let k = params.ua + vent + params.ua_internal;
    let gains = boundary.occupants * params.person_heat
        + if boundary.occupants > 0.0 { params.pc_gain } else { 0.0 }
        + boundary.solar_gain
        + params.radiator_output(state.temp);
    let t_eq = ((params.ua + vent) * boundary.outdoor_temp + params.ua_internal * params.neighbor_temp + gains) / k;
    (t_eq, k / params.capacitance)
}

/// Advances the zone by `dt` seconds with the window held at
/// `state.window_open`. Both balances are integrated exactly for constant
/// coefficients over the step.
pub fn zone_step(state: &ZoneState, params: &ZoneParams, boundary: &Boundary, dt: f64) -> Result<ZoneState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Invalid("time step must be positive".into()));
    }
    if ![boundary.outdoor_temp, boundary.occupants, boundary.solar_gain]
        .iter()
        .all(|v| v.is_finite())
        || !state.temp.is_finite()
        || !state.co2.is_finite()
    {
        return Err(Error::NonFinite("zone boundary or state".into()));
    }
    let (t_eq, rate) = thermal_coefficients(state, params, boundary);
    let temp = t_eq + (state.temp - t_eq) * (-rate * dt).exp();

    // V dC/dt = G - n V (C - C_out), with t in hours and G in ppm m3/h.
    let n = params.air_change(state.window_open);
    let source = boundary.occupants * params.person_co2 * 1e6 / params.volume;
    let hours = dt / 3600.0;
    let co2 = if n > 0.0 {
        let c_eq = params.outdoor_co2 + source / n;
        c_eq + (state.co2 - c_eq) * (-n * hours).exp()
    } else {
        state.co2 + source * hours
    };
    Ok(ZoneState {
        temp,
        co2: co2.max(0.0),
        window_open: state.window_open,
        timestamp: state.timestamp + dt.round() as i64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bare() -> ZoneParams {
        ZoneParams {
            n_closed: 0.0,
            ua_internal: 0.0,
            radiator_capacity: 0.0,
            pc_gain: 0.0,
            ..ZoneParams::default()
        }
    }

    fn state(temp: f64, co2: f64, open: bool) -> ZoneState {
        ZoneState {
            temp,
            co2,
            window_open: open,
            timestamp: 0,
        }
    }

    #[test]
    fn analytic_decay() {
        let p = bare();
        let tau = p.capacitance / p.ua;
        let s = zone_step(&state(10.0, 400.0, false), &p, &Boundary::default(), 600.0).unwrap();
        let exact = 10.0 * (-600.0 / tau).exp();
        assert!(((s.temp - exact) / exact).abs() <= 1e-12);
        assert_eq!(s.timestamp, 600);
    }

    #[test]
    fn equilibrium_is_fixed_point() {
        let p = ZoneParams {
            radiator_capacity: 0.0,
            ..ZoneParams::default()
        };
        let b = Boundary {
            outdoor_temp: 5.0,
            occupants: 2.0,
            solar_gain: 100.0,
        };
        let (t_eq, _) = thermal_coefficients(&state(0.0, 400.0, false), &p, &b);
        let c_eq = p.outdoor_co2 + 2.0 * p.person_co2 * 1e6 / p.volume / p.n_closed;
        let next = zone_step(&state(t_eq, c_eq, false), &p, &b, 600.0).unwrap();
        assert!((next.temp - t_eq).abs() < 1e-12);
        assert!((next.co2 - c_eq).abs() < 1e-9);
    }

    #[test]
    fn open_window_decays_co2() {
        let p = ZoneParams::default();
        let mut s = state(21.0, 1500.0, true);
        for _ in 0..12 {
            let next = zone_step(&s, &p, &Boundary::default(), 600.0).unwrap();
            assert!(next.co2 < s.co2 && next.co2 >= p.outdoor_co2);
            s = next;
        }
        assert!((s.co2 - p.outdoor_co2).abs() < 1.0);
    }

    #[test]
    fn validation() {
        assert!(ZoneParams::default().validate().is_ok());
        assert!(ZoneParams { volume: 0.0, ..Default::default() }.validate().is_err());
        assert!(ZoneParams { n_open: 0.4, ..Default::default() }.validate().is_err());
        assert!(zone_step(&state(20.0, 400.0, false), &ZoneParams::default(), &Boundary { outdoor_temp: f64::NAN, ..Default::default() }, 600.0).is_err());
    }

    proptest! {
        #[test]
        fn exact_for_any_step(t0 in -10.0..40.0f64, tout in -10.0..35.0f64, dt in 1.0..1e6f64, open in any::<bool>(), ua in 1.0..200.0f64) {
            let p = ZoneParams { ua, ..bare() };
            let b = Boundary { outdoor_temp: tout, occupants: 0.0, solar_gain: 0.0 };
            let s = zone_step(&state(t0, 400.0, open), &p, &b, dt).unwrap();
            let k = ua + RHO_CP_AIR * p.volume * p.air_change(open) / 3600.0;
            let exact = tout + (t0 - tout) * (-k * dt / p.capacitance).exp();
            prop_assert!((s.temp - exact).abs() <= 1e-9 * exact.abs().max(1.0));
            // Relaxes monotonically toward the outdoor temperature.
            prop_assert!((s.temp - tout).abs() <= (t0 - tout).abs() + 1e-12);
        }

        #[test]
        fn co2_monotone_without_occupants(c0 in 0.0..3000.0f64, open in any::<bool>()) {
            let p = ZoneParams::default();
            let s = zone_step(&state(20.0, c0, open), &p, &Boundary::default(), 600.0).unwrap();
            prop_assert!(s.co2 >= 0.0);
            prop_assert!((s.co2 - p.outdoor_co2).abs() <= (c0 - p.outdoor_co2).abs());
        }
    }
}
