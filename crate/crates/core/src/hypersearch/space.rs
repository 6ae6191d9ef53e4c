use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, MAX_BATCH, MAX_HIDDEN_LAYERS, MIN_BATCH};

/// Ranges sampled by random search, plus the discretization used by grid
/// search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    /// Inclusive range of hidden layer counts.
    pub layers: [usize; 2],
    /// Inclusive range of neurons per hidden layer.
    pub neurons: [usize; 2],
    pub learning_rate: [f64; 2],
    pub l1: [f64; 2],
    pub batch_sizes: Vec<usize>,
    pub activations: Vec<Activation>,
    pub trials: usize,
    /// Iterations per search trial.
    pub iterations: u64,
    /// Iterations used to retrain the winner.
    pub final_iterations: u64,
    pub grid: Grid,
}

/// Discrete values for grid search. Every hidden layer of a grid point has
/// the same width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub layers: Vec<usize>,
    pub neurons: Vec<usize>,
    pub learning_rates: Vec<f64>,
    pub l1: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            layers: vec![1, 2, 3],
            neurons: vec![10, 40, 70, 100],
            learning_rates: vec![0.01, 0.1],
            l1: vec![1e-4],
            batch_sizes: vec![4096],
            activations: vec![Activation::Relu],
        }
    }
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            layers: [1, MAX_HIDDEN_LAYERS],
            neurons: [10, 100],
            learning_rate: [0.01, 0.1],
            l1: [1e-5, 0.9],
            batch_sizes: (7..=13).map(|p| 1usize << p).collect(),
            activations: vec![Activation::Relu, Activation::Tanh],
            trials: 500,
            iterations: 2000,
            final_iterations: 10_000,
            grid: Grid::default(),
        }
    }
}

fn positive_range(name: &str, r: [f64; 2]) -> Result<()> {
    if !(r[0].is_finite() && r[1].is_finite() && r[0] > 0.0 && r[0] <= r[1]) {
        return Err(Error::Config(format!("{name} range must be positive and non-empty")));
    }
    Ok(())
}

fn batches(name: &str, b: &[usize]) -> Result<()> {
    if b.is_empty() || b.iter().any(|x| !(MIN_BATCH..=MAX_BATCH).contains(x)) {
        return Err(Error::Config(format!(
            "{name} must be non-empty with values in [{MIN_BATCH}, {MAX_BATCH}]"
        )));
    }
    Ok(())
}

impl SearchSpace {
    pub fn from_toml(text: &str) -> Result<Self> {
        let space: Self = toml::from_str(text).map_err(|e| Error::Config(format!("search space: {e}")))?;
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        let [lmin, lmax] = self.layers;
        if !(1 <= lmin && lmin <= lmax && lmax <= MAX_HIDDEN_LAYERS) {
            return Err(Error::Config(format!("layer range must lie within [1, {MAX_HIDDEN_LAYERS}]")));
        }
        let [nmin, nmax] = self.neurons;
        if !(1 <= nmin && nmin <= nmax) {
            return Err(Error::Config("neuron range must be non-empty".into()));
        }
        positive_range("learning rate", self.learning_rate)?;
        positive_range("l1", self.l1)?;
        batches("batch_sizes", &self.batch_sizes)?;
        if self.activations.is_empty() {
            return Err(Error::Config("at least one activation is required".into()));
        }
        if self.trials < 1 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.iterations < 1 || self.final_iterations < 1 {
            return Err(Error::Config("iteration budgets must be positive".into()));
        }
        Ok(())
    }
}

impl Grid {
    pub fn validate(&self) -> Result<()> {
        if self.layers.iter().any(|&l| !(1..=3).contains(&l)) {
            return Err(Error::Config("grid search covers 1 to 3 hidden layers".into()));
        }
        if self.neurons.contains(&0) {
            return Err(Error::Config("grid neuron counts must be positive".into()));
        }
        if self.learning_rates.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
            return Err(Error::Config("grid learning rates must be positive".into()));
        }
        if self.l1.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
            return Err(Error::Config("grid l1 values must be non-negative".into()));
        }
        if self.batch_sizes.iter().any(|x| !(MIN_BATCH..=MAX_BATCH).contains(x)) {
            return Err(Error::Config(format!("grid batch sizes must lie in [{MIN_BATCH}, {MAX_BATCH}]")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.layers.len()
            * self.neurons.len()
            * self.learning_rates.len()
            * self.l1.len()
            * self.batch_sizes.len()
            * self.activations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_partial_toml() {
        let s = SearchSpace::from_toml("trials = 3\nlayers = [1, 2]\n[grid]\nneurons = [10, 20]\n").unwrap();
        assert_eq!(s.trials, 3);
        assert_eq!(s.layers, [1, 2]);
        assert_eq!(s.grid.neurons, vec![10, 20]);
        assert_eq!(s.grid.learning_rates, vec![0.01, 0.1]);
        assert_eq!(s.batch_sizes.len(), 7);
    }

    #[test]
    fn rejects_bad_spaces() {
        assert!(SearchSpace::from_toml("trials = 0").is_err());
        assert!(SearchSpace::from_toml("layers = [0, 3]").is_err());
        assert!(SearchSpace::from_toml("layers = [1, 8]").is_err());
        assert!(SearchSpace::from_toml("learning_rate = [0.1, 0.01]").is_err());
        assert!(SearchSpace::from_toml("batch_sizes = [64]").is_err());
        assert!(SearchSpace::from_toml("bogus = 1").is_err());
        let g = Grid {
            layers: vec![4],
            ..Grid::default()
        };
        assert!(g.validate().is_err());
    }
}
