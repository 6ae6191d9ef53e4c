use std::cmp::Ordering;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::space::{Grid, SearchSpace};
use super::with_workers;
use crate::error::{Error, Result};
use crate::nn::{evaluate, init_network, train, Activation, NetworkConfig, TrainConfig};
use crate::timeseries::SampleSet;
use crate::util;

/// One point of the search space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    pub l1: f64,
    pub batch_size: usize,
}

impl TrialConfig {
    pub fn network_config(&self, input_width: usize, init_seed: u64) -> NetworkConfig {
        NetworkConfig::new(input_width)
            .with_hidden(&self.hidden)
            .with_activation(self.activation)
            .with_seed(init_seed)
    }

    pub fn train_config(&self, base: &TrainConfig) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            l1: self.l1,
            batch_size: self.batch_size,
            ..base.clone()
        }
    }

    pub fn hidden_label(&self) -> String {
        self.hidden.iter().map(|n| n.to_string()).collect::<Vec<_>>().join("-")
    }

    /// Lexicographic order over (hidden sizes, activation, learning rate, l1, batch).
    pub fn lexical_cmp(&self, other: &Self) -> Ordering {
        self.hidden
            .cmp(&other.hidden)
            .then_with(|| self.activation.to_string().cmp(&other.activation.to_string()))
            .then_with(|| self.learning_rate.total_cmp(&other.learning_rate))
            .then_with(|| self.l1.total_cmp(&other.l1))
            .then_with(|| self.batch_size.cmp(&other.batch_size))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    /// Position in the order the configurations were generated.
    pub index: usize,
    pub config: TrialConfig,
    pub acc: Option<f64>,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub f1: Option<f64>,
    pub auc: Option<f64>,
    pub error: Option<String>,
    pub elapsed_s: f64,
}

impl TrialResult {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

fn desc(a: Option<f64>, b: Option<f64>) -> Ordering {
    let key = |v: Option<f64>| v.unwrap_or(f64::NEG_INFINITY);
    key(b).total_cmp(&key(a))
}

/// Sorts best first: successful trials by F1, then accuracy (both
/// descending), then configuration, then generation index.
pub fn rank(results: &mut [TrialResult]) {
    results.sort_by(|a, b| {
        a.failed()
            .cmp(&b.failed())
            .then_with(|| desc(a.f1, b.f1))
            .then_with(|| desc(a.acc, b.acc))
            .then_with(|| a.config.lexical_cmp(&b.config))
            .then_with(|| a.index.cmp(&b.index))
    });
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchReport {
    /// Ranked best first.
    pub results: Vec<TrialResult>,
    pub failures: usize,
}

impl SearchReport {
    pub fn best(&self) -> Option<&TrialResult> {
        self.results.first().filter(|r| !r.failed())
    }
}

fn run_one(
    index: usize,
    config: &TrialConfig,
    base: &TrainConfig,
    init_seed: u64,
    train_set: &SampleSet,
    valid: &SampleSet,
) -> TrialResult {
    let started = Instant::now();
    let outcome = (|| -> Result<_> {
        let net = init_network(&config.network_config(train_set.width(), init_seed))?;
        let (net, _, _) = train(net, train_set, &config.train_config(base))?;
        if !net.is_finite() {
            return Err(Error::NonFinite("trained weights".into()));
        }
        Ok(evaluate(&net, valid, 0.5)?.0)
    })();
    let mut result = TrialResult {
        index,
        config: config.clone(),
        acc: None,
        tpr: None,
        tnr: None,
        f1: None,
        auc: None,
        error: None,
        elapsed_s: 0.0,
    };
    match outcome {
        Ok(e) => {
            result.acc = e.rates.acc;
            result.tpr = e.rates.tpr;
            result.tnr = e.rates.tnr;
            result.f1 = e.rates.f1;
            result.auc = e.auc;
        }
        Err(e) => {
            log::warn!("trial {index} failed: {e}");
            result.error = Some(e.to_string());
        }
    }
    result.elapsed_s = started.elapsed().as_secs_f64();
    result
}

/// Trains every configuration with `base` (its iteration count is the trial
/// budget) and ranks them on `valid`. Failed trials are kept and ranked last.
pub fn run_trials(
    configs: &[TrialConfig],
    base: &TrainConfig,
    init_seed: u64,
    train_set: &SampleSet,
    valid: &SampleSet,
    workers: usize,
) -> Result<SearchReport> {
    base.validate()?;
    if train_set.width() != valid.width() {
        return Err(Error::Dimension("training and validation sets differ in width".into()));
    }
    let mut results: Vec<TrialResult> = with_workers(workers, || {
        configs
            .par_iter()
            .enumerate()
            .map(|(i, c)| run_one(i, c, base, init_seed, train_set, valid))
            .collect()
    })?;
    let failures = results.iter().filter(|r| r.failed()).count();
    rank(&mut results);
    Ok(SearchReport { results, failures })
}

fn grid_points(grid: &Grid) -> Vec<TrialConfig> {
    let mut out = Vec::with_capacity(grid.len());
    for &layers in &grid.layers {
        for &neurons in &grid.neurons {
            for &activation in &grid.activations {
                for &learning_rate in &grid.learning_rates {
                    for &l1 in &grid.l1 {
                        for &batch_size in &grid.batch_sizes {
                            out.push(TrialConfig {
                                hidden: vec![neurons; layers],
                                activation,
                                learning_rate,
                                l1,
                                batch_size,
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

/// Trains every grid point once.
pub fn grid_search(
    grid: &Grid,
    base: &TrainConfig,
    init_seed: u64,
    train_set: &SampleSet,
    valid: &SampleSet,
    workers: usize,
) -> Result<SearchReport> {
    grid.validate()?;
    if grid.is_empty() {
        return Err(Error::Config("grid has no points".into()));
    }
    run_trials(&grid_points(grid), base, init_seed, train_set, valid, workers)
}

fn log_uniform(rng: &mut impl Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        return lo;
    }
    (rng.gen_range(lo.ln()..=hi.ln())).exp()
}

/// Draws `trials` configurations: layer count and widths uniform integers,
/// learning rate and l1 log-uniform, batch size and activation uniform over
/// their sets.
pub fn sample_configs(space: &SearchSpace, trials: usize, seed: u64) -> Result<Vec<TrialConfig>> {
    space.validate()?;
    let mut rng = util::stream_rng(seed, 2);
    Ok((0..trials)
        .map(|_| {
            let layers = rng.gen_range(space.layers[0]..=space.layers[1]);
            TrialConfig {
                hidden: (0..layers).map(|_| rng.gen_range(space.neurons[0]..=space.neurons[1])).collect(),
                activation: *space.activations.choose(&mut rng).expect("validated non-empty"),
                learning_rate: log_uniform(&mut rng, space.learning_rate),
                l1: log_uniform(&mut rng, space.l1),
                batch_size: *space.batch_sizes.choose(&mut rng).expect("validated non-empty"),
            }
        })
        .collect())
}

pub fn random_search(
    space: &SearchSpace,
    trials: usize,
    base: &TrainConfig,
    seed: u64,
    train_set: &SampleSet,
    valid: &SampleSet,
    workers: usize,
) -> Result<SearchReport> {
    if trials < 1 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let configs = sample_configs(space, trials, seed)?;
    run_trials(&configs, base, seed, train_set, valid, workers)
}

pub fn write_trials_csv(path: &Path, report: &SearchReport) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_trials_csv_to(std::io::BufWriter::new(file), report).map_err(|e| Error::io(path, e))
}

pub fn write_trials_csv_to<W: Write>(writer: W, report: &SearchReport) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "rank", "trial", "hidden", "activation", "learning_rate", "l1", "batch_size", "acc", "tpr", "tnr", "f1",
        "auc", "elapsed_s", "error",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (rank, r) in report.results.iter().enumerate() {
        w.write_record([
            (rank + 1).to_string(),
            r.index.to_string(),
            r.config.hidden_label(),
            r.config.activation.to_string(),
            r.config.learning_rate.to_string(),
            r.config.l1.to_string(),
            r.config.batch_size.to_string(),
            opt(r.acc),
            opt(r.tpr),
            opt(r.tnr),
            opt(r.f1),
            opt(r.auc),
            r.elapsed_s.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Points in the unit square labeled open inside a centered disc.
    pub(crate) fn disc(n: usize, seed: u64) -> SampleSet {
        let mut rng = util::stream_rng(seed, 9);
        let mut s = SampleSet::new(vec!["x".into(), "y".into()]);
        for i in 0..n {
            let (x, y): (f64, f64) = (rng.gen(), rng.gen());
            let inside = (x - 0.5).powi(2) + (y - 0.5).powi(2) < 0.09;
            s.push(&[x, y], inside, i as i64 * 600, "o");
        }
        s
    }

    fn base(iterations: u64) -> TrainConfig {
        TrainConfig {
            iterations,
            batch_size: 128,
            ..TrainConfig::default()
        }
    }

    fn result(index: usize, f1: Option<f64>, acc: Option<f64>, hidden: Vec<usize>) -> TrialResult {
        TrialResult {
            index,
            config: TrialConfig {
                hidden,
                activation: Activation::Relu,
                learning_rate: 0.1,
                l1: 0.0,
                batch_size: 128,
            },
            acc,
            tpr: None,
            tnr: None,
            f1,
            auc: None,
            error: None,
            elapsed_s: 0.0,
        }
    }

    #[test]
    fn one_layer_grid_has_four_ranked_results() {
        let grid = Grid {
            layers: vec![1],
            neurons: vec![10, 20],
            learning_rates: vec![0.01, 0.1],
            l1: vec![0.0],
            batch_sizes: vec![128],
            activations: vec![Activation::Relu],
        };
        let data = disc(300, 1);
        let r = grid_search(&grid, &base(20), 0, &data, &data, 1).unwrap();
        assert_eq!(r.results.len(), 4);
        for w in r.results.windows(2) {
            assert!(w[0].f1.unwrap_or(f64::NEG_INFINITY) >= w[1].f1.unwrap_or(f64::NEG_INFINITY));
        }
        let empty = Grid {
            neurons: vec![],
            ..grid
        };
        assert!(grid_search(&empty, &base(20), 0, &data, &data, 1).is_err());
    }

    #[test]
    fn ties_break_on_accuracy_then_config() {
        let mut rs = vec![
            result(0, Some(0.5), Some(0.8), vec![20]),
            result(1, Some(0.5), Some(0.9), vec![30]),
            result(2, Some(0.5), Some(0.8), vec![10]),
            result(3, None, Some(0.99), vec![5]),
            TrialResult {
                error: Some("boom".into()),
                ..result(4, Some(0.9), Some(0.9), vec![1])
            },
        ];
        rank(&mut rs);
        let order: Vec<usize> = rs.iter().map(|r| r.index).collect();
        assert_eq!(order, vec![1, 2, 0, 3, 4]);
    }

    #[test]
    fn planted_best_config_ranks_first() {
        let grid = Grid {
            layers: vec![1],
            neurons: vec![16],
            learning_rates: vec![1e-6, 0.3],
            l1: vec![0.0],
            batch_sizes: vec![128],
            activations: vec![Activation::Relu],
        };
        let train_set = disc(600, 2);
        let valid = disc(300, 3);
        let r = grid_search(&grid, &base(400), 0, &train_set, &valid, 1).unwrap();
        assert_eq!(r.best().unwrap().config.learning_rate, 0.3);
    }

    #[test]
    fn random_search_is_deterministic() {
        let space = SearchSpace {
            layers: [1, 2],
            neurons: [4, 8],
            batch_sizes: vec![128],
            ..SearchSpace::default()
        };
        let a = sample_configs(&space, 5, 7).unwrap();
        assert_eq!(a, sample_configs(&space, 5, 7).unwrap());
        assert_ne!(a, sample_configs(&space, 5, 8).unwrap());
        for c in &a {
            assert!((1..=2).contains(&c.hidden.len()));
            assert!(c.hidden.iter().all(|n| (4..=8).contains(n)));
            assert!(c.learning_rate >= 0.01 && c.learning_rate <= 0.1);
            assert!(c.l1 >= 1e-5 && c.l1 <= 0.9);
        }
        let data = disc(200, 4);
        let r = random_search(&space, 1, &base(5), 7, &data, &data, 1).unwrap();
        assert_eq!(r.results.len(), 1);
    }

    #[test]
    fn trials_csv_has_one_row_per_trial() {
        let rs = vec![result(0, Some(0.5), Some(0.8), vec![20, 10])];
        let mut buf = Vec::new();
        write_trials_csv_to(
            &mut buf,
            &SearchReport {
                results: rs,
                failures: 0,
            },
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().nth(1).unwrap().starts_with("1,0,20-10,relu,0.1,0,128,0.8,"));
    }
}
