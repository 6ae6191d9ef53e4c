//! Self-contained model files: a JSON envelope holding the feature schema,
//! the architecture, and every parameter as big-endian hex IEEE-754 bits.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::network::{Activation, Layer, Network};
use super::optim::OptimizerState;
use crate::error::{Error, Result};
use crate::timeseries::FeatureSchema;
use crate::util::{decode_f64_hex, encode_f64_hex};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("unsupported checkpoint format version {found} (supported: {supported})")]
    Version { found: u64, supported: u32 },
    #[error("truncated checkpoint")]
    Truncated,
    #[error("dimension inconsistency: {0}")]
    Dimension(String),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub schema: FeatureSchema,
    pub optimizer: Option<OptimizerState>,
    /// Unix seconds; omitted when `None` so that files are reproducible.
    pub created_at: Option<i64>,
}

#[derive(Serialize, Deserialize)]
struct LayerDoc {
    weights: String,
    biases: String,
}

#[derive(Serialize, Deserialize)]
struct OptimizerDoc {
    g0: f64,
    step: u64,
    weights: Vec<String>,
    biases: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Document {
    format_version: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    created_at: Option<i64>,
    schema: FeatureSchema,
    hidden_activation: Activation,
    layer_sizes: Vec<usize>,
    layers: Vec<LayerDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    optimizer: Option<OptimizerDoc>,
}

fn decode(text: &str, expected: usize, what: &str) -> std::result::Result<Vec<f64>, CheckpointError> {
    if text.len() % 16 != 0 {
        return Err(CheckpointError::Dimension(format!(
            "{what}: {} hex digits is not a whole number of values",
            text.len()
        )));
    }
    let values = decode_f64_hex(text).ok_or_else(|| CheckpointError::Corrupt(format!("{what}: invalid hex")))?;
    if values.len() != expected {
        return Err(CheckpointError::Dimension(format!(
            "{what}: expected {expected} values, found {}",
            values.len()
        )));
    }
    Ok(values)
}

impl Checkpoint {
    pub fn new(network: Network, schema: FeatureSchema) -> Self {
        Self {
            network,
            schema,
            optimizer: None,
            created_at: None,
        }
    }

    pub fn with_optimizer(mut self, state: OptimizerState) -> Self {
        self.optimizer = Some(state);
        self
    }

    pub fn to_json(&self) -> Result<String> {
        if self.schema.width() != self.network.input_width() {
            return Err(CheckpointError::Dimension(format!(
                "schema width {} vs network input {}",
                self.schema.width(),
                self.network.input_width()
            ))
            .into());
        }
        let doc = Document {
            format_version: FORMAT_VERSION as u64,
            created_at: self.created_at,
            schema: self.schema.clone(),
            hidden_activation: self.network.activation,
            layer_sizes: self.network.layer_sizes(),
            layers: self
                .network
                .layers
                .iter()
                .map(|l| LayerDoc {
                    weights: encode_f64_hex(l.weights.as_slice().expect("standard layout")),
                    biases: encode_f64_hex(l.biases.as_slice().expect("standard layout")),
                })
                .collect(),
            optimizer: self.optimizer.as_ref().map(|s| OptimizerDoc {
                g0: s.g0,
                step: s.step,
                weights: s.weights.iter().map(|w| encode_f64_hex(w.as_slice().expect("standard layout"))).collect(),
                biases: s.biases.iter().map(|b| encode_f64_hex(b.as_slice().expect("standard layout"))).collect(),
            }),
        };
        let mut text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Invalid(e.to_string()))?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, CheckpointError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| {
            if e.is_eof() {
                CheckpointError::Truncated
            } else {
                CheckpointError::Corrupt(e.to_string())
            }
        })?;
        let version = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| CheckpointError::Corrupt("missing format_version".into()))?;
        if version != FORMAT_VERSION as u64 {
            return Err(CheckpointError::Version {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        let doc: Document = serde_json::from_value(value).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        doc.schema
            .validate()
            .map_err(|e| CheckpointError::Corrupt(format!("schema: {e}")))?;
        let sizes = &doc.layer_sizes;
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) || *sizes.last().unwrap() != 1 {
            return Err(CheckpointError::Dimension(format!("invalid layer sizes {sizes:?}")));
        }
        if sizes.len() - 1 != doc.layers.len() {
            return Err(CheckpointError::Dimension(format!(
                "{} layer sizes but {} layers",
                sizes.len(),
                doc.layers.len()
            )));
        }
        if sizes[0] != doc.schema.width() {
            return Err(CheckpointError::Dimension(format!(
                "input layer {} vs schema width {}",
                sizes[0],
                doc.schema.width()
            )));
        }
        let mut layers = Vec::with_capacity(doc.layers.len());
        for (i, l) in doc.layers.iter().enumerate() {
            let (fan_in, fan_out) = (sizes[i], sizes[i + 1]);
            let w = decode(&l.weights, fan_in * fan_out, &format!("layer {i} weights"))?;
            let b = decode(&l.biases, fan_out, &format!("layer {i} biases"))?;
            layers.push(Layer {
                weights: Array2::from_shape_vec((fan_out, fan_in), w).expect("checked length"),
                biases: Array1::from(b),
            });
        }
        let network = Network {
            layers,
            activation: doc.hidden_activation,
        };
        if !network.is_finite() {
            return Err(CheckpointError::Corrupt("non-finite parameter".into()));
        }
        let optimizer = match doc.optimizer {
            None => None,
            Some(o) => {
                if o.weights.len() != network.layers.len() || o.biases.len() != network.layers.len() {
                    return Err(CheckpointError::Dimension("optimizer layer count".into()));
                }
                let mut weights = Vec::new();
                let mut biases = Vec::new();
                for (i, l) in network.layers.iter().enumerate() {
                    let w = decode(&o.weights[i], l.weights.len(), &format!("accumulator {i} weights"))?;
                    let b = decode(&o.biases[i], l.biases.len(), &format!("accumulator {i} biases"))?;
                    weights.push(Array2::from_shape_vec(l.weights.dim(), w).expect("checked length"));
                    biases.push(Array1::from(b));
                }
                Some(OptimizerState {
                    weights,
                    biases,
                    step: o.step,
                    g0: o.g0,
                })
            }
        };
        Ok(Self {
            network,
            schema: doc.schema,
            optimizer,
            created_at: doc.created_at,
        })
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let text = checkpoint.to_json()?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(Checkpoint::from_json(&text)?)
}
