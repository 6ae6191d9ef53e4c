//! Time-series preparation: ingestion, weather join, resampling, imputation,
//! scaling and labeled sample construction.

mod impute;
mod ingest;
mod join;
mod resample;
mod samples;
mod schema;
mod stats;
mod table;

pub use impute::{impute, ImputationRules, ImputeRule};
pub use ingest::{ingest_csv, write_csv, TableKind};
pub use join::{join_weather, JoinOutcome};
pub use resample::{resample_linear, ResamplePlan};
pub use samples::{build_samples, Sample, SampleSet};
pub use schema::{scale, unscale, FeatureDef, FeatureSchema};
pub use stats::{office_stats, DEFAULT_COLD_THRESHOLD_C};
pub use table::{Row, TimeSeriesTable};

/// Indoor channels in canonical CSV order (window state excluded).
pub const INDOOR_CHANNELS: [&str; 7] = [
    "presence",
    "co2",
    "rel_humidity",
    "set_temp_t1",
    "set_temp_t2",
    "indoor_temp",
    "facade_outdoor_temp",
];

/// Weather channels in canonical CSV order.
pub const WEATHER_CHANNELS: [&str; 11] = [
    "avg_temp",
    "avg_rel_humidity",
    "ground_temp_minus100cm",
    "rain_droplets_total",
    "rain_droplets_volume",
    "max_wind_speed",
    "wind_direction",
    "wind_speed",
    "avg_pressure",
    "global_radiation",
    "diffuse_radiation",
];

/// Features computed from the record timestamp rather than read from a column.
pub const DERIVED_CHANNELS: [&str; 3] = ["hour", "day_of_week", "timestamp"];

/// Channels that only take the values 0 and 1.
pub const BINARY_CHANNELS: [&str; 2] = ["presence", "window_state"];

pub const LABEL_CHANNEL: &str = "window_state";

pub fn is_derived(channel: &str) -> bool {
    DERIVED_CHANNELS.contains(&channel)
}

/// Joins weather (when given), imputes absent schema channels and builds the
/// scaled samples.
pub fn prepare_samples(
    indoor: &TimeSeriesTable,
    weather: Option<&TimeSeriesTable>,
    rules: &ImputationRules,
    schema: &FeatureSchema,
) -> crate::error::Result<SampleSet> {
    let joined = match weather {
        Some(w) => join_weather(indoor, w)?.table,
        None => indoor.clone(),
    };
    let filled = impute(&joined, rules, schema)?;
    build_samples(&filled, schema)
}
