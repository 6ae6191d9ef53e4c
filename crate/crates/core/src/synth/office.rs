use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::rule::{local_hour_fraction, BehaviorRule};
use super::SynthConfig;
use crate::cosim::{zone_step, Boundary, ZoneParams, ZoneState};
use crate::error::{Error, Result};
use crate::timeseries::{Row, TimeSeriesTable, INDOOR_CHANNELS};
use crate::util;

/// Everything that defines one synthetic office.
#[derive(Debug, Clone, PartialEq)]
pub struct OfficeSpec {
    pub office_id: String,
    pub rule: BehaviorRule,
    /// Radiator setpoint, degC.
    pub setpoint: f64,
    /// Persons working in the office.
    pub persons: f64,
    /// Mean arrival and departure, local hours.
    pub arrival_h: f64,
    pub departure_h: f64,
    /// Probability that a weekday is spent away.
    pub absence_prob: f64,
    pub zone: ZoneParams,
}

impl OfficeSpec {
    pub fn new(office_id: &str, rule: BehaviorRule) -> Self {
        Self {
            office_id: office_id.to_string(),
            rule,
            setpoint: 21.0,
            persons: 1.0,
            arrival_h: 8.0,
            departure_h: 17.0,
            absence_prob: 0.08,
            zone: ZoneParams::default(),
        }
    }
}

/// Generated indoor series plus the noiseless window states.
#[derive(Debug, Clone)]
pub struct OfficeData {
    pub table: TimeSeriesTable,
    pub truth: Vec<bool>,
    /// Number of labels that differ from the truth.
    pub flipped: usize,
}

#[derive(Clone, Copy)]
struct DayPlan {
    arrive: f64,
    leave: f64,
    lunch: Option<(f64, f64)>,
}

fn plan_day(spec: &OfficeSpec, weekday: u32, rng: &mut impl Rng) -> Option<DayPlan> {
    let absent = rng.gen_bool(spec.absence_prob.clamp(0.0, 1.0));
    let arrive = spec.arrival_h + Normal::new(0.0, 0.5).unwrap().sample(rng);
    let leave = spec.departure_h + Normal::new(0.0, 0.7).unwrap().sample(rng);
    let lunch_start = rng.gen_range(11.75..12.75);
    let has_lunch = rng.gen_bool(0.5);
    if weekday >= 5 || absent || leave <= arrive {
        return None;
    }
    Some(DayPlan {
        arrive,
        leave,
        lunch: has_lunch.then_some((lunch_start, lunch_start + 0.75)),
    })
}

fn present(plan: Option<DayPlan>, hour: f64) -> bool {
    match plan {
        None => false,
        Some(p) => hour >= p.arrive && hour < p.leave && !p.lunch.is_some_and(|(a, b)| hour >= a && hour < b),
    }
}

/// Saturation vapour pressure over water, kPa.
fn saturation_kpa(t: f64) -> f64 {
    0.6112 * (17.62 * t / (243.12 + t)).exp()
}

/// Vapour pressure rise per person and hour in a 45 m3 room, kPa.
const VAPOUR_PER_PERSON_KPA_H: f64 = 0.15;

/// Simulates one office against the weather table (10-minute records
/// starting at `config.start`). Randomness comes from `stream`.
pub fn gen_office(config: &SynthConfig, spec: &OfficeSpec, weather: &TimeSeriesTable, stream: u64) -> Result<OfficeData> {
    config.validate()?;
    spec.rule.validate()?;
    let mut zone = spec.zone.clone();
    zone.radiator_setpoint = spec.setpoint;
    zone.validate()?;
    let col = |name: &str| {
        weather
            .column_index(name)
            .ok_or_else(|| Error::MissingFeature(name.to_string()))
    };
    let (wt, wh, wg) = (col("avg_temp")?, col("avg_rel_humidity")?, col("global_radiation")?);
    let wrows = weather.rows();
    let w_start = wrows.first().map(|r| r.timestamp).ok_or_else(|| Error::Invalid("empty weather".into()))?;
    let w_cadence = weather.cadence().max(1);

    let mut rng = util::stream_rng(config.seed, stream);
    let n01 = Normal::new(0.0, 1.0).unwrap();
    let dt = config.cadence_s();
    let steps = config.steps();
    let offset = config.utc_offset_minutes;
    let mut state = ZoneState {
        temp: spec.setpoint,
        co2: zone.outdoor_co2 + 20.0,
        window_open: false,
        timestamp: config.start,
    };
    let mut vapour: Option<f64> = None;
    let mut plan_day_index = i64::MIN;
    let mut plan = None;
    let mut open = false;
    let mut flipped = 0;
    let mut truth = Vec::with_capacity(steps);
    let mut rows = Vec::with_capacity(steps);
    let ci = |name: &str| INDOOR_CHANNELS.iter().position(|c| *c == name).unwrap();

    for k in 0..steps {
        let t = config.start + k as i64 * dt;
        let wi = ((t - w_start).div_euclid(w_cadence)) as usize;
        let wr = wrows
            .get(wi)
            .ok_or_else(|| Error::Invalid(format!("weather does not cover {t}")))?;
        let wv = |i: usize| wr.values[i].ok_or_else(|| Error::Invalid(format!("missing weather at {}", wr.timestamp)));
        let (t_out, rh_out, global) = (wv(wt)?, wv(wh)?, wv(wg)?);

        let local = t + offset as i64 * 60;
        let day = local.div_euclid(util::SECONDS_PER_DAY);
        if day != plan_day_index {
            plan_day_index = day;
            plan = plan_day(spec, util::local_day_of_week(t, offset), &mut rng);
        }
        let hour = local_hour_fraction(t, offset);
        let here = present(plan, hour);

        let e_out = rh_out / 100.0 * saturation_kpa(t_out);
        let e_in = *vapour.get_or_insert(e_out);

        let temp_obs = state.temp + 0.05 * n01.sample(&mut rng);
        let co2_obs = (state.co2 + 8.0 * n01.sample(&mut rng)).clamp(0.0, 2500.0);
        let rh_obs = (100.0 * e_in / saturation_kpa(state.temp) + 0.5 * n01.sample(&mut rng)).clamp(5.0, 100.0);
        let facade = (t_out + 0.004 * global + 0.3 * n01.sample(&mut rng)).clamp(-10.0, 50.0);
        let set1 = spec.setpoint.clamp(18.0, 26.0);
        let set2 = (spec.setpoint + 0.5).clamp(18.0, 26.0);

        let z = spec.rule.score(temp_obs, co2_obs, facade, here, hour);
        open = spec.rule.decide(z, open);
        let flip = spec.rule.noise > 0.0 && rng.gen_bool(spec.rule.noise);
        flipped += flip as usize;
        truth.push(open);

        let mut values = vec![None; INDOOR_CHANNELS.len()];
        values[ci("presence")] = Some(if here { 1.0 } else { 0.0 });
        values[ci("co2")] = Some(co2_obs);
        values[ci("rel_humidity")] = Some(rh_obs);
        values[ci("set_temp_t1")] = Some(set1);
        values[ci("set_temp_t2")] = Some(set2);
        values[ci("indoor_temp")] = Some(temp_obs);
        values[ci("facade_outdoor_temp")] = Some(facade);
        rows.push(Row {
            timestamp: t,
            office_id: spec.office_id.clone(),
            values,
            window_state: Some(open ^ flip),
        });

        let occupants = if here { spec.persons } else { 0.0 };
        state.window_open = open;
        let boundary = Boundary {
            outdoor_temp: t_out,
            occupants,
            solar_gain: global * zone.solar_aperture,
        };
        let n = zone.air_change(open);
        let src = occupants * VAPOUR_PER_PERSON_KPA_H * 45.0 / zone.volume;
        let hours = dt as f64 / 3600.0;
        vapour = Some(if n > 0.0 {
            let eq = e_out + src / n;
            eq + (e_in - eq) * (-n * hours).exp()
        } else {
            e_in + src * hours
        });
        state = zone_step(&state, &zone, &boundary, dt as f64)?;
    }
    let columns = INDOOR_CHANNELS.iter().map(|s| s.to_string()).collect();
    let table = TimeSeriesTable::new(columns, rows)
        .with_cadence(dt)
        .with_utc_offset(offset);
    Ok(OfficeData { table, truth, flipped })
}
