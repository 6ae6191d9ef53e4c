use std::io::Write;
use std::path::Path;
use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::Network;
use super::optim::{prox_adagrad_step, OptimizerState, DEFAULT_G0};
use crate::error::{Error, Result};
use crate::metrics::{self, ConfusionMatrix, Rates};
use crate::timeseries::SampleSet;
use crate::util;

pub const MIN_BATCH: usize = 1 << 7;
pub const MAX_BATCH: usize = 1 << 13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub l1: f64,
    pub batch_size: usize,
    pub iterations: u64,
    pub g0: f64,
    pub shuffle_seed: u64,
    pub history_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            l1: 1e-4,
            batch_size: 4096,
            iterations: 10_000,
            g0: DEFAULT_G0,
            shuffle_seed: 0,
            history_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(self.l1.is_finite() && self.l1 >= 0.0) {
            return Err(Error::Config("l1 must be non-negative".into()));
        }
        if !(MIN_BATCH..=MAX_BATCH).contains(&self.batch_size) {
            return Err(Error::Config(format!(
                "batch size must be in [{MIN_BATCH}, {MAX_BATCH}], got {}",
                self.batch_size
            )));
        }
        if !(self.g0.is_finite() && self.g0 > 0.0) {
            return Err(Error::Config("accumulator init must be positive".into()));
        }
        if self.history_every == 0 {
            return Err(Error::Config("history interval must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryRecord {
    pub iteration: u64,
    /// Cross-entropy of the minibatch just before the update.
    pub loss: f64,
    pub l1_penalty: f64,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainHistory {
    pub records: Vec<HistoryRecord>,
}

impl TrainHistory {
    pub fn write_csv_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.records {
            w.serialize(r).map_err(|e| Error::Invalid(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io("<history>", e))?;
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(file)
    }
}

/// Minibatch training loop that can be advanced in chunks, so callers can
/// evaluate between steps while keeping the shuffle stream continuous.
pub struct Trainer<'a> {
    network: Network,
    state: OptimizerState,
    samples: &'a SampleSet,
    cfg: TrainConfig,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    iteration: u64,
    history: TrainHistory,
    started: Instant,
    buffer: Vec<f64>,
}

impl<'a> Trainer<'a> {
    pub fn new(
        network: Network,
        state: Option<OptimizerState>,
        samples: &'a SampleSet,
        cfg: &TrainConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        network.check_consistent()?;
        if samples.is_empty() {
            return Err(Error::Invalid("empty sample set".into()));
        }
        if samples.width() != network.input_width() {
            return Err(Error::Dimension(format!(
                "samples have width {} but network expects {}",
                samples.width(),
                network.input_width()
            )));
        }
        let state = match state {
            Some(s) if s.matches(&network) => s,
            Some(_) => return Err(Error::Dimension("optimizer state does not match network".into())),
            None => OptimizerState::new(&network, cfg.g0),
        };
        Ok(Self {
            network,
            state,
            samples,
            cfg: cfg.clone(),
            rng: util::stream_rng(cfg.shuffle_seed, 1),
            order: (0..samples.len()).collect(),
            cursor: samples.len(),
            iteration: 0,
            history: TrainHistory::default(),
            started: Instant::now(),
            buffer: Vec::new(),
        })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn history(&self) -> &TrainHistory {
        &self.history
    }

    fn next_batch(&mut self) -> (Array2<f64>, Vec<bool>) {
        if self.cursor >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let end = (self.cursor + self.cfg.batch_size).min(self.order.len());
        let idx = &self.order[self.cursor..end];
        self.cursor = end;
        let width = self.samples.width();
        self.buffer.clear();
        let mut labels = Vec::with_capacity(idx.len());
        for &i in idx {
            self.buffer.extend_from_slice(self.samples.row(i));
            labels.push(self.samples.labels[i]);
        }
        let x = Array2::from_shape_vec((idx.len(), width), std::mem::take(&mut self.buffer)).expect("row-major batch");
        (x, labels)
    }

    pub fn step(&mut self) -> Result<()> {
        let (x, labels) = self.next_batch();
        let (grads, loss, _) = self.network.backward(x.view(), &labels)?;
        self.buffer = x.into_raw_vec_and_offset().0;
        prox_adagrad_step(&mut self.network, &grads, &mut self.state, self.cfg.learning_rate, self.cfg.l1)?;
        self.iteration += 1;
        if self.iteration % self.cfg.history_every == 0 {
            self.history.records.push(HistoryRecord {
                iteration: self.iteration,
                loss,
                l1_penalty: self.cfg.l1 * self.network.l1_norm(),
                elapsed_s: self.started.elapsed().as_secs_f64(),
            });
        }
        Ok(())
    }

    pub fn run(&mut self, iterations: u64) -> Result<()> {
        for _ in 0..iterations {
            self.step()?;
        }
        Ok(())
    }

    pub fn finish(self) -> (Network, OptimizerState, TrainHistory) {
        (self.network, self.state, self.history)
    }
}

/// Runs `cfg.iterations` minibatch steps from a fresh optimizer state.
pub fn train(network: Network, samples: &SampleSet, cfg: &TrainConfig) -> Result<(Network, OptimizerState, TrainHistory)> {
    let mut trainer = Trainer::new(network, None, samples, cfg)?;
    trainer.run(cfg.iterations)?;
    Ok(trainer.finish())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prediction {
    pub state: bool,
    pub probability: f64,
}

/// Thresholded predictions; a probability equal to the threshold predicts open.
pub fn predict(network: &Network, features: ArrayView2<f64>, threshold: f64) -> Result<Vec<Prediction>> {
    Ok(network
        .forward(features)?
        .iter()
        .map(|&p| Prediction {
            state: p >= threshold,
            probability: p,
        })
        .collect())
}

const EVAL_CHUNK: usize = 8192;

impl Network {
    /// Probabilities for every sample, computed in bounded chunks.
    pub fn probabilities(&self, samples: &SampleSet) -> Result<Vec<f64>> {
        let width = samples.width();
        if width != self.input_width() {
            return Err(Error::Dimension(format!(
                "samples have width {width} but network expects {}",
                self.input_width()
            )));
        }
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.features.chunks(EVAL_CHUNK * width.max(1)) {
            let x = ArrayView2::from_shape((chunk.len() / width, width), chunk).expect("row-major samples");
            out.extend(self.forward(x)?.iter());
        }
        Ok(out)
    }
}

/// Confusion matrix, rates and ROC of a model on a labeled set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub rates: Rates,
    pub auc: Option<f64>,
}

pub fn evaluate(network: &Network, samples: &SampleSet, threshold: f64) -> Result<(Evaluation, Vec<f64>)> {
    let probs = network.probabilities(samples)?;
    let predicted: Vec<bool> = probs.iter().map(|&p| p >= threshold).collect();
    let cm = metrics::confusion(&predicted, &samples.labels)?;
    let auc = metrics::roc(&probs, &samples.labels)?.auc;
    Ok((
        Evaluation {
            confusion: cm,
            rates: metrics::rates(&cm),
            auc,
        },
        probs,
    ))
}
