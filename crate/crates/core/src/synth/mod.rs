//! Synthetic weather and office data driven by known behavior rules.

mod office;
mod population;
mod rule;
mod weather;

pub use office::{gen_office, OfficeData, OfficeSpec};
pub use population::{draw_specs, gen_population, write_ground_truth, write_ground_truth_to, Archetype, Population};
pub use rule::{replay_rule, BehaviorRule};
pub use weather::{gen_weather, MEASURED_RANGES};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 2014-04-01T00:00:00Z
pub const DEFAULT_START: i64 = 1_396_310_400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClimateProfile {
    /// Annual mean outdoor temperature, degC.
    pub mean_temp: f64,
    pub annual_amplitude: f64,
    pub diurnal_amplitude: f64,
    /// Standard deviation of the slow weather anomaly, K.
    pub anomaly_sd: f64,
    pub latitude_deg: f64,
}

impl Default for ClimateProfile {
    fn default() -> Self {
        Self {
            mean_temp: 10.5,
            annual_amplitude: 9.0,
            diurnal_amplitude: 4.0,
            anomaly_sd: 2.5,
            latitude_deg: 50.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub offices: usize,
    pub days: u32,
    /// Indoor sampling cadence in minutes: 1, 10 or 15.
    pub cadence_min: u32,
    pub seed: u64,
    /// Scale of the per-office perturbation of archetype parameters.
    pub perturbation: f64,
    /// Label flip probability.
    pub noise: f64,
    /// Shares of archetypes A, B, C and outliers.
    pub mixture: [f64; 4],
    pub start: i64,
    pub utc_offset_minutes: i32,
    pub climate: ClimateProfile,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            offices: 52,
            days: 120,
            cadence_min: 10,
            seed: 0,
            perturbation: 1.0,
            noise: 0.1,
            mixture: [0.3, 0.25, 0.2, 0.25],
            start: DEFAULT_START,
            utc_offset_minutes: 60,
            climate: ClimateProfile::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.days < 1 {
            return Err(Error::Config("days must be at least 1".into()));
        }
        if ![1, 10, 15].contains(&self.cadence_min) {
            return Err(Error::Config("cadence must be 1, 10 or 15 minutes".into()));
        }
        if !(0.0..0.5).contains(&self.noise) {
            return Err(Error::Config("label noise must be in [0, 0.5)".into()));
        }
        if self.mixture.iter().any(|&m| !(m.is_finite() && m >= 0.0)) || self.mixture.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config("mixture weights must be non-negative and not all zero".into()));
        }
        if !(self.perturbation.is_finite() && self.perturbation >= 0.0) {
            return Err(Error::Config("perturbation must be non-negative".into()));
        }
        Ok(())
    }

    pub fn cadence_s(&self) -> i64 {
        self.cadence_min as i64 * 60
    }

    pub fn steps(&self) -> usize {
        (self.days as i64 * crate::util::SECONDS_PER_DAY / self.cadence_s()) as usize
    }
}
