use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::TimeSeriesTable;

/// Ground-truth window rule. The score is linear in indoor temperature,
/// CO2, outdoor temperature, presence and the daily harmonics of the local
/// hour:
///
/// `z = intercept + w_indoor_temp (T_in - temp_reference) + w_co2 (CO2 - 600) / 100
///    + w_outdoor_temp (T_out - 12) / 5 + w_presence presence
///    + w_hour_cos cos(2 pi h / 24) + w_hour_sin sin(2 pi h / 24)`
///
/// A closed window opens when `z > hysteresis / 2`; an open window closes
/// when `z <= -hysteresis / 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorRule {
    pub intercept: f64,
    pub temp_reference: f64,
    pub w_indoor_temp: f64,
    pub w_co2: f64,
    pub w_outdoor_temp: f64,
    pub w_presence: f64,
    pub w_hour_cos: f64,
    pub w_hour_sin: f64,
    pub hysteresis: f64,
    /// Probability that an emitted label is flipped.
    pub noise: f64,
}

impl Default for BehaviorRule {
    fn default() -> Self {
        Self {
            intercept: 0.0,
            temp_reference: 22.0,
            w_indoor_temp: 0.0,
            w_co2: 0.0,
            w_outdoor_temp: 0.0,
            w_presence: 0.0,
            w_hour_cos: 0.0,
            w_hour_sin: 0.0,
            hysteresis: 0.0,
            noise: 0.0,
        }
    }
}

impl BehaviorRule {
    pub fn never_open() -> Self {
        Self {
            intercept: -1e9,
            ..Self::default()
        }
    }

    /// Opens exactly when the indoor temperature exceeds `threshold`.
    pub fn open_above(threshold: f64) -> Self {
        Self {
            intercept: 22.0 - threshold,
            w_indoor_temp: 1.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.noise) {
            return Err(Error::Config("rule noise must be in [0, 0.5)".into()));
        }
        if !(self.hysteresis.is_finite() && self.hysteresis >= 0.0) {
            return Err(Error::Config("rule hysteresis must be non-negative".into()));
        }
        Ok(())
    }

    pub fn score(&self, indoor_temp: f64, co2: f64, outdoor_temp: f64, present: bool, local_hour: f64) -> f64 {
        let phase = 2.0 * PI * local_hour / 24.0;
        self.intercept
            + self.w_indoor_temp * (indoor_temp - self.temp_reference)
            + self.w_co2 * (co2 - 600.0) / 100.0
            + self.w_outdoor_temp * (outdoor_temp - 12.0) / 5.0
            + if present { self.w_presence } else { 0.0 }
            + self.w_hour_cos * phase.cos()
            + self.w_hour_sin * phase.sin()
    }

    pub fn decide(&self, score: f64, was_open: bool) -> bool {
        if was_open {
            score > -self.hysteresis / 2.0
        } else {
            score > self.hysteresis / 2.0
        }
    }
}

pub(crate) fn local_hour_fraction(timestamp: i64, utc_offset_minutes: i32) -> f64 {
    (timestamp + utc_offset_minutes as i64 * 60).rem_euclid(86_400) as f64 / 3600.0
}

/// Re-evaluates the rule on an office's emitted indoor series, starting
/// closed, and returns the noiseless window states.
pub fn replay_rule(rule: &BehaviorRule, table: &TimeSeriesTable, office_id: &str) -> Result<Vec<bool>> {
    let col = |name: &str| {
        table
            .column_index(name)
            .ok_or_else(|| Error::MissingFeature(name.to_string()))
    };
    let (ti, ci, oi, pi) = (col("indoor_temp")?, col("co2")?, col("facade_outdoor_temp")?, col("presence")?);
    let mut open = false;
    let mut out = Vec::new();
    for r in table.office_rows(office_id) {
        let get = |i: usize| r.values[i].ok_or_else(|| Error::Invalid(format!("missing value at {}", r.timestamp)));
        let z = rule.score(
            get(ti)?,
            get(ci)?,
            get(oi)?,
            get(pi)? > 0.5,
            local_hour_fraction(r.timestamp, table.utc_offset_minutes),
        );
        open = rule.decide(z, open);
        out.push(open);
    }
    Ok(out)
}
