use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::schema::FeatureSchema;
use super::table::TimeSeriesTable;
use super::is_derived;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ImputeRule {
    /// Fixed value.
    Constant { value: f64 },
    /// `factor * source` evaluated row by row.
    Proportional { source: String, factor: f64 },
}

/// Rules that fill channels absent from a data set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImputationRules {
    pub rules: BTreeMap<String, ImputeRule>,
}

impl ImputationRules {
    /// Fill-ins for sparse office data sets: rain droplet count 0.5, ground
    /// temperature 0.8 x outdoor temperature, indoor humidity 30 %, both set
    /// temperatures 23 degC, maximum wind 1.6 x wind speed, pressure 1000 mbar,
    /// diffuse radiation 0.3 x global radiation.
    pub fn sparse_building_defaults() -> Self {
        let mut rules = BTreeMap::new();
        let c = |value| ImputeRule::Constant { value };
        let p = |source: &str, factor| ImputeRule::Proportional {
            source: source.into(),
            factor,
        };
        rules.insert("rain_droplets_total".into(), c(0.5));
        rules.insert("ground_temp_minus100cm".into(), p("avg_temp", 0.8));
        rules.insert("rel_humidity".into(), c(30.0));
        rules.insert("set_temp_t1".into(), c(23.0));
        rules.insert("set_temp_t2".into(), c(23.0));
        rules.insert("max_wind_speed".into(), p("wind_speed", 1.6));
        rules.insert("avg_pressure".into(), c(1000.0));
        rules.insert("diffuse_radiation".into(), p("global_radiation", 0.3));
        Self { rules }
    }

    pub fn insert(&mut self, channel: &str, rule: ImputeRule) {
        self.rules.insert(channel.into(), rule);
    }

    /// Every rule targeting a schema channel must read a schema channel.
    /// Rules for channels outside the schema are inert.
    pub fn validate(&self, schema: &FeatureSchema) -> Result<()> {
        let channels = schema.channels();
        for (target, rule) in self.rules.iter().filter(|(t, _)| channels.contains(t)) {
            if let ImputeRule::Proportional { source, factor } = rule {
                if !channels.contains(source) {
                    return Err(Error::Config(format!(
                        "imputation rule for `{target}` reads `{source}`, which is not in the schema"
                    )));
                }
                if !factor.is_finite() {
                    return Err(Error::Config(format!("non-finite factor for `{target}`")));
                }
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("imputation rules: {e}")))
    }
}

/// Fills every schema channel absent from `table` according to `rules`.
/// Present columns are never modified.
pub fn impute(
    table: &TimeSeriesTable,
    rules: &ImputationRules,
    schema: &FeatureSchema,
) -> Result<TimeSeriesTable> {
    rules.validate(schema)?;
    let mut pending: Vec<String> = schema
        .channels()
        .into_iter()
        .filter(|c| !is_derived(c) && !table.has_column(c))
        .collect();
    for c in &pending {
        if !rules.rules.contains_key(c) {
            return Err(Error::MissingFeature(c.clone()));
        }
    }
    let mut out = table.clone();
    // Proportional rules may depend on other imputed channels; resolve in
    // dependency order.
    while !pending.is_empty() {
        let ready = pending.iter().position(|c| match &rules.rules[c] {
            ImputeRule::Constant { .. } => true,
            ImputeRule::Proportional { source, .. } => out.has_column(source),
        });
        let Some(pos) = ready else {
            return Err(Error::MissingFeature(format!(
                "{} (rule sources unavailable)",
                pending.join(", ")
            )));
        };
        let channel = pending.remove(pos);
        let rule = &rules.rules[&channel];
        let source = match rule {
            ImputeRule::Proportional { source, .. } => out.column_index(source),
            ImputeRule::Constant { .. } => None,
        };
        let idx = out.add_column(&channel);
        for row in out.rows_mut() {
            row.values[idx] = match rule {
                ImputeRule::Constant { value } => Some(*value),
                ImputeRule::Proportional { factor, .. } => {
                    row.values[source.expect("checked above")].map(|v| factor * v)
                }
            };
        }
        out.imputed.insert(channel);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::Row;

    fn table(cols: &[&str], vals: &[f64]) -> TimeSeriesTable {
        TimeSeriesTable::new(
            cols.iter().map(|c| c.to_string()).collect(),
            vec![Row {
                timestamp: 0,
                office_id: "o".into(),
                values: vals.iter().map(|&v| Some(v)).collect(),
                window_state: Some(false),
            }],
        )
    }

    fn schema(channels: &[&str]) -> FeatureSchema {
        FeatureSchema {
            label: "window_state".into(),
            input_width: None,
            features: channels
                .iter()
                .map(|c| crate::timeseries::FeatureDef::new(c, "-", -100.0, 100.0))
                .collect(),
        }
    }

    #[test]
    fn sparse_defaults_fill_expected_values() {
        let s = schema(&[
            "avg_temp",
            "wind_speed",
            "ground_temp_minus100cm",
            "max_wind_speed",
            "rel_humidity",
            "indoor_temp",
        ]);
        let t = table(&["avg_temp", "wind_speed", "indoor_temp"], &[10.0, 5.0, 21.0]);
        let out = impute(&t, &ImputationRules::sparse_building_defaults(), &s).unwrap();
        let r = &out.rows()[0];
        assert!((out.value(r, "ground_temp_minus100cm").unwrap() - 8.0).abs() < 1e-12);
        assert!((out.value(r, "max_wind_speed").unwrap() - 8.0).abs() < 1e-12);
        assert_eq!(out.value(r, "rel_humidity"), Some(30.0));
        assert!(out.imputed.contains("rel_humidity"));
        assert!(!out.imputed.contains("avg_temp"));
        // Present values untouched bit for bit.
        assert_eq!(out.value(r, "indoor_temp").unwrap().to_bits(), 21.0f64.to_bits());
    }

    #[test]
    fn present_columns_are_never_overwritten() {
        let s = schema(&["rel_humidity"]);
        let t = table(&["rel_humidity"], &[55.5]);
        let out = impute(&t, &ImputationRules::sparse_building_defaults(), &s).unwrap();
        assert_eq!(out.value(&out.rows()[0], "rel_humidity"), Some(55.5));
        assert!(out.imputed.is_empty());
    }

    #[test]
    fn missing_rule_names_feature() {
        let s = schema(&["co2"]);
        let t = table(&["indoor_temp"], &[20.0]);
        match impute(&t, &ImputationRules::default(), &s) {
            Err(Error::MissingFeature(name)) => assert_eq!(name, "co2"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rule_source_outside_schema_is_rejected() {
        let mut rules = ImputationRules::default();
        rules.insert(
            "co2",
            ImputeRule::Proportional {
                source: "nope".into(),
                factor: 1.0,
            },
        );
        assert!(rules.validate(&schema(&["co2"])).is_err());
    }

    #[test]
    fn rules_parse_from_toml() {
        let text = "[rules.co2]\nrule = \"constant\"\nvalue = 600.0\n[rules.max_wind_speed]\nrule = \"proportional\"\nsource = \"wind_speed\"\nfactor = 1.6\n";
        let r = ImputationRules::from_toml(text).unwrap();
        assert_eq!(r.rules["co2"], ImputeRule::Constant { value: 600.0 });
    }
}
