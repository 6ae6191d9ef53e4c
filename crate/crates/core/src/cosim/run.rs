use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use ndarray::ArrayView2;
use serde::Serialize;

use super::features::FeatureAssembler;
use super::zone::{zone_step, Boundary, ZoneParams, ZoneState};
use crate::error::{Error, Result};
use crate::metrics::{behavior_summary, duration_stats, ActionCount, BehaviorSummary, DurationStats};
use crate::nn::Network;
use crate::timeseries::{FeatureSchema, ImputationRules, TimeSeriesTable};

/// Chooses the window state from raw (unscaled) inputs in schema order.
pub trait WindowPolicy {
    /// Returns the window state and the probability of it being open.
    fn decide(&mut self, schema: &FeatureSchema, raw: &[f64]) -> Result<(bool, f64)>;
}

/// Policy backed by a trained network.
pub struct ModelPolicy<'a> {
    pub network: &'a Network,
    pub threshold: f64,
}

impl WindowPolicy for ModelPolicy<'_> {
    fn decide(&mut self, schema: &FeatureSchema, raw: &[f64]) -> Result<(bool, f64)> {
        let scaled = schema.scale_vector(raw)?;
        let x = ArrayView2::from_shape((1, scaled.len()), &scaled).expect("single row");
        let p = self.network.forward(x)?[0];
        Ok((p >= self.threshold, p))
    }
}

/// Policy from a closure, for scripted or rule-based windows.
pub struct FnPolicy<F>(pub F);

impl<F> WindowPolicy for FnPolicy<F>
where
    F: FnMut(&FeatureSchema, &[f64]) -> (bool, f64),
{
    fn decide(&mut self, schema: &FeatureSchema, raw: &[f64]) -> Result<(bool, f64)> {
        Ok((self.0)(schema, raw))
    }
}

/// Boundary conditions at the evaluation cadence: weather channels and the
/// number of occupants per step.
#[derive(Debug, Clone)]
pub struct BoundarySeries {
    pub timestamps: Vec<i64>,
    pub occupants: Vec<f64>,
    pub weather_columns: Vec<String>,
    /// One row of weather values per step, in `weather_columns` order.
    pub weather: Vec<Vec<f64>>,
    pub cadence_s: i64,
}

impl BoundarySeries {
    /// Uses every weather record as one step; rows with a missing channel
    /// are rejected.
    pub fn from_weather(weather: &TimeSeriesTable, occupants: impl Fn(i64) -> f64) -> Result<Self> {
        let mut out = Self {
            timestamps: Vec::with_capacity(weather.len()),
            occupants: Vec::with_capacity(weather.len()),
            weather_columns: weather.columns().to_vec(),
            weather: Vec::with_capacity(weather.len()),
            cadence_s: weather.cadence(),
        };
        for r in weather.rows() {
            let values: Option<Vec<f64>> = r.values.iter().copied().collect();
            let values = values.ok_or_else(|| Error::Invalid(format!("weather record at {} has gaps", r.timestamp)))?;
            out.timestamps.push(r.timestamp);
            out.occupants.push(occupants(r.timestamp));
            out.weather.push(values);
        }
        if out.timestamps.is_empty() {
            return Err(Error::Invalid("empty boundary series".into()));
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    fn channel(&self, step: usize, name: &str) -> Option<f64> {
        self.weather_columns.iter().position(|c| c == name).map(|i| self.weather[step][i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub timestamp: i64,
    #[serde(rename = "T_in")]
    pub temp: f64,
    pub co2: f64,
    pub window_state: u8,
    pub probability: f64,
    pub n_air_change: f64,
}

#[derive(Debug, Clone)]
pub struct CosimRun {
    pub trajectory: Vec<TrajectoryPoint>,
    pub behavior: BehaviorSummary,
    pub durations: DurationStats,
}

/// Steps the zone through the boundary series. At every step the policy
/// sees the current simulated state and boundary, its decision sets the
/// air-change rate for the following interval.
pub fn run_cosim(
    policy: &mut dyn WindowPolicy,
    params: &ZoneParams,
    boundary: &BoundarySeries,
    schema: &FeatureSchema,
    rules: &ImputationRules,
    initial: ZoneState,
    utc_offset_minutes: i32,
) -> Result<CosimRun> {
    params.validate()?;
    if boundary.is_empty() {
        return Err(Error::Invalid("empty boundary series".into()));
    }
    let mut assembler = FeatureAssembler::new(schema.clone(), rules.clone(), utc_offset_minutes)?;
    let dt = boundary.cadence_s as f64;
    let outdoor_col = boundary
        .weather_columns
        .iter()
        .position(|c| c == "avg_temp")
        .ok_or_else(|| Error::MissingFeature("avg_temp".into()))?;
    let mut state = initial;
    let mut trajectory = Vec::with_capacity(boundary.len());
    let mut supplied = BTreeMap::new();
    for step in 0..boundary.len() {
        let t = boundary.timestamps[step];
        let occupants = boundary.occupants[step];
        let outdoor = boundary.weather[step][outdoor_col];
        supplied.clear();
        for (i, c) in boundary.weather_columns.iter().enumerate() {
            supplied.insert(c.clone(), boundary.weather[step][i]);
        }
        supplied.insert("indoor_temp".into(), state.temp);
        supplied.insert("co2".into(), state.co2);
        supplied.insert("presence".into(), if occupants > 0.0 { 1.0 } else { 0.0 });
        supplied.insert("set_temp_t1".into(), params.radiator_setpoint);
        supplied.insert("set_temp_t2".into(), params.radiator_setpoint);
        supplied.insert("facade_outdoor_temp".into(), outdoor);
        let raw = assembler.assemble(t, &supplied)?;
        let (open, probability) = policy.decide(schema, &raw)?;
        state.window_open = open;
        state.timestamp = t;
        trajectory.push(TrajectoryPoint {
            timestamp: t,
            temp: state.temp,
            co2: state.co2,
            window_state: open as u8,
            probability,
            n_air_change: params.air_change(open),
        });
        let solar = boundary.channel(step, "global_radiation").unwrap_or(0.0) * params.solar_aperture;
        state = zone_step(
            &state,
            params,
            &Boundary {
                outdoor_temp: outdoor,
                occupants,
                solar_gain: solar,
            },
            dt,
        )?;
    }
    let states: Vec<bool> = trajectory.iter().map(|p| p.window_state == 1).collect();
    let stamps: Vec<i64> = trajectory.iter().map(|p| p.timestamp).collect();
    Ok(CosimRun {
        behavior: behavior_summary(&states, &stamps, boundary.cadence_s, ActionCount::Opening)?,
        durations: duration_stats(&states, &stamps, boundary.cadence_s)?,
        trajectory,
    })
}

pub fn write_trajectory_csv<W: Write>(writer: W, trajectory: &[TrajectoryPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for p in trajectory {
        w.serialize(p).map_err(|e| Error::Invalid(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io("<trajectory>", e))
}

impl CosimRun {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        write_trajectory_csv(file, &self.trajectory)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitReport {
    pub mse: f64,
    pub mae: f64,
}

/// Mean squared and mean absolute error of simulated vs measured values.
pub fn fit_report(simulated: &[f64], measured: &[f64]) -> Result<FitReport> {
    if simulated.len() != measured.len() {
        return Err(Error::Dimension(format!(
            "{} simulated vs {} measured values",
            simulated.len(),
            measured.len()
        )));
    }
    if simulated.is_empty() {
        return Err(Error::Invalid("empty series".into()));
    }
    let n = simulated.len() as f64;
    let (mut se, mut ae) = (0.0, 0.0);
    for (s, m) in simulated.iter().zip(measured) {
        se += (s - m).powi(2);
        ae += (s - m).abs();
    }
    Ok(FitReport { mse: se / n, mae: ae / n })
}
