use ndarray::{Array1, Array2};

use super::network::{Gradients, Network};
use crate::error::{Error, Result};

/// Initial value of every squared-gradient accumulator.
pub const DEFAULT_G0: f64 = 0.1;

/// Squared-gradient accumulators, shaped like the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub step: u64,
    pub g0: f64,
}

impl OptimizerState {
    pub fn new(network: &Network, g0: f64) -> Self {
        Self {
            weights: network.layers.iter().map(|l| Array2::from_elem(l.weights.dim(), g0)).collect(),
            biases: network.layers.iter().map(|l| Array1::from_elem(l.biases.len(), g0)).collect(),
            step: 0,
            g0,
        }
    }

    pub fn matches(&self, network: &Network) -> bool {
        self.weights.len() == network.layers.len()
            && self.biases.len() == network.layers.len()
            && network.layers.iter().enumerate().all(|(i, l)| {
                self.weights[i].dim() == l.weights.dim() && self.biases[i].len() == l.biases.len()
            })
    }
}

/// One proximal Adagrad update over a flat parameter slice:
/// `G += g^2`, `u = w - eta/sqrt(G) * g`, `w = sign(u) * max(0, |u| - eta/sqrt(G) * l1)`.
pub fn prox_update(w: &mut [f64], g: &[f64], acc: &mut [f64], lr: f64, l1: f64) {
    for ((w, &g), acc) in w.iter_mut().zip(g).zip(acc.iter_mut()) {
        *acc += g * g;
        let step = lr / acc.sqrt();
        let u = *w - step * g;
        let shrink = step * l1;
        *w = if l1 == 0.0 {
            u
        } else {
            u.signum() * (u.abs() - shrink).max(0.0)
        };
    }
}

/// Applies one step to every parameter. Biases are never shrunk. The
/// network is left untouched if any gradient is non-finite.
pub fn prox_adagrad_step(
    network: &mut Network,
    gradients: &Gradients,
    state: &mut OptimizerState,
    lr: f64,
    l1: f64,
) -> Result<()> {
    if !state.matches(network) || gradients.layers.len() != network.layers.len() {
        return Err(Error::Dimension("optimizer state does not match network".into()));
    }
    if !gradients.is_finite() {
        return Err(Error::NonFinite("gradient".into()));
    }
    for (i, layer) in network.layers.iter_mut().enumerate() {
        let g = &gradients.layers[i];
        if g.weights.dim() != layer.weights.dim() || g.biases.len() != layer.biases.len() {
            return Err(Error::Dimension(format!("gradient shape at layer {i}")));
        }
        prox_update(
            layer.weights.as_slice_mut().expect("standard layout"),
            g.weights.as_slice().expect("standard layout"),
            state.weights[i].as_slice_mut().expect("standard layout"),
            lr,
            l1,
        );
        prox_update(
            layer.biases.as_slice_mut().expect("standard layout"),
            g.biases.as_slice().expect("standard layout"),
            state.biases[i].as_slice_mut().expect("standard layout"),
            lr,
            0.0,
        );
    }
    state.step += 1;
    Ok(())
}
