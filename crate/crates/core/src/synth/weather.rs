use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::SynthConfig;
use crate::timeseries::{Row, TimeSeriesTable, WEATHER_CHANNELS};
use crate::util;

/// Observed min/max of each weather channel at the reference station; the
/// generator never leaves these ranges.
pub const MEASURED_RANGES: [(&str, f64, f64); 11] = [
    ("avg_temp", -5.41, 37.49),
    ("avg_rel_humidity", 17.84, 100.0),
    ("ground_temp_minus100cm", 4.35, 18.33),
    ("rain_droplets_total", 0.0, 10.72),
    ("rain_droplets_volume", 0.0, 0.20),
    ("max_wind_speed", 0.0, 24.74),
    ("wind_direction", 0.0, 356.5),
    ("wind_speed", 0.0, 13.2),
    ("avg_pressure", 959.39, 1010.14),
    ("global_radiation", 0.0, 1159.0),
    ("diffuse_radiation", 0.0, 485.1),
];

pub const WEATHER_CADENCE_S: i64 = 600;
const LONGITUDE_DEG: f64 = 6.1;

/// First-order autoregressive process with unit stationary variance.
struct Ar1 {
    phi: f64,
    value: f64,
}

impl Ar1 {
    fn new(correlation_s: f64, rng: &mut impl Rng) -> Self {
        Self {
            phi: (-(WEATHER_CADENCE_S as f64) / correlation_s).exp(),
            value: StandardNormal.sample(rng),
        }
    }

    fn next(&mut self, rng: &mut impl Rng) -> f64 {
        let e: f64 = StandardNormal.sample(rng);
        self.value = self.phi * self.value + (1.0 - self.phi * self.phi).sqrt() * e;
        self.value
    }
}

fn day_of_year(t: i64) -> f64 {
    (t as f64 / 86_400.0).rem_euclid(365.2425)
}

/// Sine of the solar elevation angle.
fn sin_elevation(t: i64, latitude_deg: f64) -> f64 {
    let doy = day_of_year(t);
    let decl = (23.44f64).to_radians() * (2.0 * PI * (doy - 81.0) / 365.0).sin();
    let utc_hours = (t.rem_euclid(86_400)) as f64 / 3600.0;
    let hour_angle = (15.0 * (utc_hours + LONGITUDE_DEG / 15.0 - 12.0)).to_radians();
    let lat = latitude_deg.to_radians();
    lat.sin() * decl.sin() + lat.cos() * decl.cos() * hour_angle.cos()
}

fn clamp(channel: usize, v: f64) -> f64 {
    let (_, lo, hi) = MEASURED_RANGES[channel];
    v.clamp(lo, hi)
}

/// Weather at 10-minute cadence over the configured horizon.
pub fn gen_weather(config: &SynthConfig) -> TimeSeriesTable {
    let c = &config.climate;
    let mut rng = util::stream_rng(config.seed, u64::MAX);
    let mut anomaly = Ar1::new(2.0 * 86_400.0, &mut rng);
    let mut cloud = Ar1::new(6.0 * 3600.0, &mut rng);
    let mut wind = Ar1::new(3.0 * 3600.0, &mut rng);
    let mut pressure = Ar1::new(2.0 * 86_400.0, &mut rng);
    let mut direction: f64 = rng.gen_range(0.0..360.0);
    let steps = (config.days as i64 * util::SECONDS_PER_DAY / WEATHER_CADENCE_S) as usize;
    let columns: Vec<String> = WEATHER_CHANNELS.iter().map(|s| s.to_string()).collect();
    let mut rows = Vec::with_capacity(steps);
    for k in 0..steps {
        let t = config.start + k as i64 * WEATHER_CADENCE_S;
        let doy = day_of_year(t);
        let local_h = (t + config.utc_offset_minutes as i64 * 60).rem_euclid(86_400) as f64 / 3600.0;
        let a = anomaly.next(&mut rng);
        let cloudiness = 1.0 / (1.0 + (-1.5 * cloud.next(&mut rng)).exp());
        let seasonal = (2.0 * PI * (doy - 105.0) / 365.0).sin();
        let diurnal = (2.0 * PI * (local_h - 15.0) / 24.0).cos();
        let temp = c.mean_temp
            + c.annual_amplitude * seasonal
            + c.diurnal_amplitude * (1.0 - 0.6 * cloudiness) * diurnal
            + c.anomaly_sd * a;
        let rh = 72.0 + 25.0 * (cloudiness - 0.5) - 12.0 * (1.0 - 0.6 * cloudiness) * diurnal - 2.0 * a
            + 3.0 * rng.sample::<f64, _>(StandardNormal);
        let ground = 11.3 + 5.0 * (2.0 * PI * (doy - 135.0) / 365.0).sin() + 0.2 * a;
        let raining = cloudiness > 0.8 && rng.gen_bool(0.6);
        let rain_total = if raining { (cloudiness - 0.8) * 40.0 * rng.gen_range(0.2..1.0) } else { 0.0 };
        let rain_volume = rain_total * 0.015;
        let w = (1.0 + 0.45 * wind.next(&mut rng)).exp() - 0.5;
        let gust = w * rng.gen_range(1.4..1.9);
        direction = (direction + 8.0 * rng.sample::<f64, _>(StandardNormal)).rem_euclid(360.0);
        let p = 990.0 + 8.0 * pressure.next(&mut rng) - 6.0 * cloudiness;
        let s = sin_elevation(t, c.latitude_deg);
        let clear = if s > 0.0 { 1050.0 * s.powf(1.2) } else { 0.0 };
        let global = clear * (1.0 - 0.75 * cloudiness.powi(3));
        let global = clamp(9, global);
        let diffuse = clamp(10, global * (0.25 + 0.55 * cloudiness)).min(global);
        let values = [
            clamp(0, temp),
            clamp(1, rh),
            clamp(2, ground),
            clamp(3, rain_total),
            clamp(4, rain_volume),
            clamp(5, gust),
            clamp(6, direction),
            clamp(7, w),
            clamp(8, p),
            global,
            diffuse,
        ];
        rows.push(Row {
            timestamp: t,
            office_id: String::new(),
            values: values.iter().map(|&v| Some(v)).collect(),
            window_state: None,
        });
    }
    TimeSeriesTable::new(columns, rows)
        .with_cadence(WEATHER_CADENCE_S)
        .with_utc_offset(config.utc_offset_minutes)
}
