use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const CANONICAL: &str = include_str!("../../schema/canonical.toml");

/// One model input: a channel, its scaling bounds and an optional lag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    #[serde(default)]
    pub unit: String,
    #[serde(rename = "min")]
    pub scale_min: f64,
    #[serde(rename = "max")]
    pub scale_max: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub lag_minutes: u32,
}

fn is_zero(v: &u32) -> bool {
    *v == 0
}

impl FeatureDef {
    pub fn new(name: &str, unit: &str, scale_min: f64, scale_max: f64) -> Self {
        Self {
            name: name.to_string(),
            unit: unit.to_string(),
            scale_min,
            scale_max,
            lag_minutes: 0,
        }
    }

    pub fn lagged(mut self, minutes: u32) -> Self {
        self.lag_minutes = minutes;
        self
    }

    pub fn is_lagged(&self) -> bool {
        self.lag_minutes > 0
    }

    /// Unique column key, e.g. `co2` or `co2_lag10`.
    pub fn key(&self) -> String {
        if self.is_lagged() {
            format!("{}_lag{}", self.name, self.lag_minutes)
        } else {
            self.name.clone()
        }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.scale_min + self.scale_max)
    }
}

/// Linear min-max scaling onto `[0, 1]` with hard clamping.
pub fn scale(value: f64, feature: &FeatureDef) -> Result<f64> {
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("{} = {value}", feature.key())));
    }
    let span = feature.scale_max - feature.scale_min;
    Ok(((value - feature.scale_min) / span).clamp(0.0, 1.0))
}

pub fn unscale(scaled: f64, feature: &FeatureDef) -> f64 {
    feature.scale_min + scaled * (feature.scale_max - feature.scale_min)
}

/// Ordered feature definitions plus the label name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub label: String,
    /// Optional declared width, checked against the feature list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_width: Option<usize>,
    #[serde(rename = "feature")]
    pub features: Vec<FeatureDef>,
}

impl FeatureSchema {
    /// The shipped schema: 21 current inputs and 3 lagged ones.
    pub fn canonical() -> Self {
        Self::from_toml(CANONICAL).expect("canonical schema is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let schema: FeatureSchema =
            toml::from_str(text).map_err(|e| Error::Config(format!("schema: {e}")))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::Config("schema declares no features".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for f in &self.features {
            if !(f.scale_min.is_finite() && f.scale_max.is_finite() && f.scale_min < f.scale_max) {
                return Err(Error::Config(format!(
                    "feature `{}` needs finite bounds with min < max",
                    f.key()
                )));
            }
            if !seen.insert(f.key()) {
                return Err(Error::Config(format!("duplicate feature `{}`", f.key())));
            }
        }
        if let Some(w) = self.input_width {
            if w != self.features.len() {
                return Err(Error::Dimension(format!(
                    "schema declares input_width {w} but lists {} features",
                    self.features.len()
                )));
            }
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.features.len()
    }

    pub fn keys(&self) -> Vec<String> {
        self.features.iter().map(FeatureDef::key).collect()
    }

    /// Distinct source channels in first-use order.
    pub fn channels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for f in &self.features {
            if !out.contains(&f.name) {
                out.push(f.name.clone());
            }
        }
        out
    }

    /// Longest lag in minutes (0 when nothing is lagged).
    pub fn max_lag_minutes(&self) -> u32 {
        self.features.iter().map(|f| f.lag_minutes).max().unwrap_or(0)
    }

    /// Stable content hash used by the stepping protocol handshake.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.input_width = None;
        crate::util::sha256_hex(canonical.to_toml().as_bytes())[..16].to_string()
    }

    pub fn scale_vector(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.width() {
            return Err(Error::Dimension(format!(
                "expected {} raw values, got {}",
                self.width(),
                raw.len()
            )));
        }
        raw.iter()
            .zip(&self.features)
            .map(|(&v, f)| scale(v, f))
            .collect()
    }
}
