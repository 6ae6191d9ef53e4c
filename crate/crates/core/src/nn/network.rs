use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::distributions::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util;

pub const DEFAULT_HIDDEN: [usize; 5] = [64, 94, 81, 10, 25];
pub const MAX_HIDDEN_LAYERS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_width: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub init_seed: u64,
    /// Multiplier on the Glorot uniform bound.
    pub init_scale: f64,
}

impl NetworkConfig {
    pub fn new(input_width: usize) -> Self {
        Self {
            input_width,
            hidden: DEFAULT_HIDDEN.to_vec(),
            activation: Activation::Relu,
            init_seed: 0,
            init_scale: 1.0,
        }
    }

    pub fn with_hidden(mut self, hidden: &[usize]) -> Self {
        self.hidden = hidden.to_vec();
        self
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.init_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_width == 0 || self.hidden.iter().any(|&n| n == 0) {
            return Err(Error::Config("layer sizes must be at least 1".into()));
        }
        if self.hidden.is_empty() || self.hidden.len() > MAX_HIDDEN_LAYERS {
            return Err(Error::Config(format!(
                "hidden layer count must be in 1..={MAX_HIDDEN_LAYERS}, got {}",
                self.hidden.len()
            )));
        }
        if !(self.init_scale.is_finite() && self.init_scale > 0.0) {
            return Err(Error::Config("init_scale must be positive".into()));
        }
        Ok(())
    }

    /// Layer widths from input to the single output unit.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_width];
        sizes.extend(&self.hidden);
        sizes.push(1);
        sizes
    }
}

/// Weights are stored `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Array2::zeros((outputs, inputs)),
            biases: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<Layer>,
    pub activation: Activation,
}

/// Per-parameter gradients, shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.biases.iter()).all(|v| v.is_finite()))
    }
}

pub fn init_network(config: &NetworkConfig) -> Result<Network> {
    config.validate()?;
    let mut rng = util::stream_rng(config.init_seed, 0);
    let sizes = config.layer_sizes();
    let layers = sizes
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = config.init_scale * (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            let weights = Array2::from_shape_simple_fn((fan_out, fan_in), || dist.sample(&mut rng));
            Layer {
                weights,
                biases: Array1::zeros(fan_out),
            }
        })
        .collect();
    Ok(Network {
        layers,
        activation: config.activation,
    })
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

const P_CLAMP: f64 = 1e-12;

/// Mean binary cross-entropy with probabilities clamped away from 0 and 1.
pub fn bce_loss(probabilities: &[f64], labels: &[bool]) -> Result<f64> {
    if probabilities.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} probabilities vs {} labels",
            probabilities.len(),
            labels.len()
        )));
    }
    if probabilities.is_empty() {
        return Err(Error::Invalid("empty batch".into()));
    }
    let total: f64 = probabilities
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(P_CLAMP, 1.0 - P_CLAMP);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / probabilities.len() as f64)
}

struct Trace {
    /// Pre-activations per layer.
    z: Vec<Array2<f64>>,
    /// Layer outputs; `a[0]` is the input.
    a: Vec<Array2<f64>>,
}

impl Network {
    pub fn input_width(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(Layer::outputs)
            .collect()
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_width()];
        sizes.extend(self.layers.iter().map(Layer::outputs));
        sizes
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Fraction of weights (biases excluded) that are exactly zero.
    pub fn weight_sparsity(&self) -> f64 {
        let total: usize = self.layers.iter().map(|l| l.weights.len()).sum();
        let zeros = self
            .layers
            .iter()
            .flat_map(|l| l.weights.iter())
            .filter(|&&w| w == 0.0)
            .count();
        zeros as f64 / total as f64
    }

    pub fn l1_norm(&self) -> f64 {
        self.layers.iter().flat_map(|l| l.weights.iter()).map(|w| w.abs()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.biases.iter()).all(|v| v.is_finite()))
    }

    pub(crate) fn check_consistent(&self) -> Result<()> {
        let last = self.layers.last().ok_or_else(|| Error::Dimension("network has no layers".into()))?;
        if last.outputs() != 1 {
            return Err(Error::Dimension("output layer must have one unit".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.biases.len() != l.outputs() {
                return Err(Error::Dimension(format!("layer {i} bias length")));
            }
            if i > 0 && l.inputs() != self.layers[i - 1].outputs() {
                return Err(Error::Dimension(format!("layer {i} input width")));
            }
        }
        Ok(())
    }

    fn check_width(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_width() {
            return Err(Error::Dimension(format!(
                "input width {} but network expects {}",
                x.ncols(),
                self.input_width()
            )));
        }
        Ok(())
    }

    fn trace(&self, x: ArrayView2<f64>) -> Trace {
        let n = self.layers.len();
        let mut z = Vec::with_capacity(n);
        let mut a = Vec::with_capacity(n + 1);
        a.push(x.to_owned());
        for (i, layer) in self.layers.iter().enumerate() {
            let pre = a[i].dot(&layer.weights.t()) + &layer.biases;
            let out = if i + 1 == n {
                pre.mapv(sigmoid)
            } else {
                let act = self.activation;
                pre.mapv(|v| act.apply(v))
            };
            z.push(pre);
            a.push(out);
        }
        Trace { z, a }
    }

    /// Pre-activations of every layer for a batch, input layer first.
    pub fn pre_activations(&self, x: ArrayView2<f64>) -> Result<Vec<Array2<f64>>> {
        self.check_width(&x)?;
        Ok(self.trace(x).z)
    }

    /// Output probabilities for a batch (rows are samples).
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.check_width(&x)?;
        let mut h = x.to_owned();
        let n = self.layers.len();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut pre = h.dot(&layer.weights.t());
            pre += &layer.biases;
            if i + 1 == n {
                pre.mapv_inplace(sigmoid);
            } else {
                let act = self.activation;
                pre.mapv_inplace(|v| act.apply(v));
            }
            h = pre;
        }
        Ok(h.index_axis_move(Axis(1), 0))
    }

    /// Gradient of the mean cross-entropy over the batch, plus the batch
    /// loss and probabilities.
    pub fn backward(&self, x: ArrayView2<f64>, labels: &[bool]) -> Result<(Gradients, f64, Array1<f64>)> {
        self.check_width(&x)?;
        if labels.len() != x.nrows() {
            return Err(Error::Dimension(format!(
                "{} rows vs {} labels",
                x.nrows(),
                labels.len()
            )));
        }
        let trace = self.trace(x);
        let n = self.layers.len();
        let logits = &trace.z[n - 1];
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("activation during backward pass".into()));
        }
        let probs = trace.a[n].column(0).to_owned();
        let loss = bce_loss(probs.as_slice().expect("contiguous"), labels)?;
        let m = labels.len() as f64;
        let y = Array1::from_iter(labels.iter().map(|&l| if l { 1.0 } else { 0.0 }));
        let mut delta = ((&probs - &y) / m).insert_axis(Axis(1));
        let mut grads = Vec::with_capacity(n);
        for i in (0..n).rev() {
            let weights = delta.t().dot(&trace.a[i]);
            let biases = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut back = delta.dot(&self.layers[i].weights);
                let act = self.activation;
                ndarray::Zip::from(&mut back)
                    .and(&trace.z[i - 1])
                    .and(&trace.a[i])
                    .for_each(|d, &z, &a| *d *= act.derivative(z, a));
                delta = back;
            }
            grads.push(Layer { weights, biases });
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, loss, probs))
    }
}
