use std::collections::{BTreeMap, VecDeque};

use crate::error::{Error, Result};
use crate::timeseries::{FeatureSchema, ImputationRules, ImputeRule};
use crate::util;

/// Builds raw (unscaled) model inputs in schema order from named channel
/// values, deriving calendar features from the timestamp, filling absent
/// channels from imputation rules and serving lagged values from a history
/// of earlier calls.
#[derive(Debug, Clone)]
pub struct FeatureAssembler {
    schema: FeatureSchema,
    rules: ImputationRules,
    utc_offset_minutes: i32,
    history: VecDeque<(i64, BTreeMap<String, f64>)>,
}

impl FeatureAssembler {
    pub fn new(schema: FeatureSchema, rules: ImputationRules, utc_offset_minutes: i32) -> Result<Self> {
        schema.validate()?;
        Ok(Self {
            schema,
            rules,
            utc_offset_minutes,
            history: VecDeque::new(),
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    /// Whether `name` is a channel or a feature key of the schema.
    pub fn knows(&self, name: &str) -> bool {
        self.schema.features.iter().any(|f| f.name == name || f.key() == name)
    }

    pub fn reset(&mut self) {
        self.history.clear();
    }

    fn resolve(&self, channel: &str, timestamp: i64, supplied: &BTreeMap<String, f64>, depth: usize) -> Result<f64> {
        if let Some(&v) = supplied.get(channel) {
            return Ok(v);
        }
        match channel {
            "hour" => return Ok(util::local_hour(timestamp, self.utc_offset_minutes) as f64),
            "day_of_week" => return Ok(util::local_day_of_week(timestamp, self.utc_offset_minutes) as f64),
            "timestamp" => return Ok(timestamp as f64),
            _ => {}
        }
        match self.rules.rules.get(channel) {
            Some(ImputeRule::Constant { value }) => Ok(*value),
            Some(ImputeRule::Proportional { source, factor }) if depth < 8 => {
                Ok(factor * self.resolve(source, timestamp, supplied, depth + 1)?)
            }
            _ => Err(Error::MissingFeature(channel.to_string())),
        }
    }

    /// Raw input vector for one time step. A lagged value comes from an
    /// explicitly supplied lag key, else from the history entry exactly
    /// `lag_minutes` earlier, else it falls back to the current value.
    pub fn assemble(&mut self, timestamp: i64, supplied: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
        let mut current = BTreeMap::new();
        for channel in self.schema.channels() {
            let v = self.resolve(&channel, timestamp, supplied, 0)?;
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("feature `{channel}`")));
            }
            current.insert(channel, v);
        }
        let mut out = Vec::with_capacity(self.schema.width());
        for f in &self.schema.features {
            let v = if f.is_lagged() {
                let at = timestamp - f.lag_minutes as i64 * 60;
                supplied
                    .get(&f.key())
                    .copied()
                    .or_else(|| {
                        self.history
                            .iter()
                            .rev()
                            .find(|(t, _)| *t == at)
                            .and_then(|(_, values)| values.get(&f.name).copied())
                    })
                    .unwrap_or(current[&f.name])
            } else {
                current[&f.name]
            };
            out.push(v);
        }
        let horizon = self.schema.max_lag_minutes() as i64 * 60;
        self.history.retain(|(t, _)| *t >= timestamp - horizon && *t != timestamp);
        self.history.push_back((timestamp, current));
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn supplied(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn canonical_inputs(temp: f64) -> BTreeMap<String, f64> {
        let schema = FeatureSchema::canonical();
        let mut m: BTreeMap<String, f64> = schema
            .features
            .iter()
            .filter(|f| !f.is_lagged() && !crate::timeseries::is_derived(&f.name))
            .map(|f| (f.name.clone(), f.midpoint()))
            .collect();
        m.insert("indoor_temp".into(), temp);
        m
    }

    #[test]
    fn lags_come_from_history() {
        let schema = FeatureSchema::canonical();
        let lag_idx = schema.keys().iter().position(|k| k == "indoor_temp_lag10").unwrap();
        let mut a = FeatureAssembler::new(schema, ImputationRules::default(), 0).unwrap();
        let first = a.assemble(0, &canonical_inputs(20.0)).unwrap();
        assert_eq!(first[lag_idx], 20.0);
        let second = a.assemble(600, &canonical_inputs(21.0)).unwrap();
        assert_eq!(second[lag_idx], 20.0);
        // A gap: no record 10 minutes earlier.
        let third = a.assemble(3000, &canonical_inputs(22.0)).unwrap();
        assert_eq!(third[lag_idx], 22.0);
    }

    #[test]
    fn derived_and_imputed_features() {
        let schema = FeatureSchema::canonical();
        let keys = schema.keys();
        let mut inputs = canonical_inputs(20.0);
        inputs.remove("rel_humidity");
        inputs.remove("ground_temp_minus100cm");
        inputs.insert("avg_temp".into(), 10.0);
        let mut a = FeatureAssembler::new(schema.clone(), ImputationRules::sparse_building_defaults(), 60).unwrap();
        let v = a.assemble(86_400 * 4 + 7 * 3600, &inputs).unwrap();
        let get = |k: &str| v[keys.iter().position(|x| x == k).unwrap()];
        assert_eq!(get("hour"), 8.0);
        assert_eq!(get("day_of_week"), 0.0);
        assert_eq!(get("rel_humidity"), 30.0);
        assert_eq!(get("ground_temp_minus100cm"), 8.0);

        let mut bare = FeatureAssembler::new(schema, ImputationRules::default(), 0).unwrap();
        match bare.assemble(0, &supplied(&[("co2", 500.0)])) {
            Err(Error::MissingFeature(_)) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
