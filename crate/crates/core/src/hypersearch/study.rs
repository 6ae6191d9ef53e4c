use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::search::TrialConfig;
use super::with_workers;
use crate::error::{Error, Result};
use crate::nn::{evaluate, init_network, train, TrainConfig};
use crate::timeseries::SampleSet;
use crate::util;

/// Metrics aggregated by the study, in report order.
pub const STUDY_METRICS: [&str; 4] = ["acc", "tpr", "tnr", "f1"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedResult {
    pub seed: u64,
    pub acc: Option<f64>,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub fpr: Option<f64>,
    pub f1: Option<f64>,
    pub auc: Option<f64>,
    pub error: Option<String>,
}

impl SeedResult {
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "acc" => self.acc,
            "tpr" => self.tpr,
            "tnr" => self.tnr,
            "fpr" => self.fpr,
            "f1" => self.f1,
            "auc" => self.auc,
            _ => None,
        }
    }
}

/// Summary statistics of one metric across seeds. Quantiles interpolate
/// linearly between order statistics; `std` is the sample standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub metric: String,
    pub count: usize,
    pub min: f64,
    pub q25: f64,
    pub mean: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
    pub std: f64,
}

impl Aggregate {
    pub fn of(metric: &str, values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let s = util::sorted(values);
        let n = s.len() as f64;
        let mean = s.iter().sum::<f64>() / n;
        let var = if s.len() > 1 {
            s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let q = |p| util::quantile_sorted(&s, p).expect("non-empty");
        Some(Self {
            metric: metric.to_string(),
            count: s.len(),
            min: s[0],
            q25: q(0.25),
            mean,
            median: q(0.5),
            q75: q(0.75),
            max: s[s.len() - 1],
            std: var.sqrt(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedStudyReport {
    pub config: TrialConfig,
    pub iterations: u64,
    pub per_seed: Vec<SeedResult>,
    pub failures: usize,
    pub aggregates: Vec<Aggregate>,
}

impl SeedStudyReport {
    pub fn aggregate(&self, metric: &str) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.metric == metric)
    }

    fn aggregate_all(per_seed: &[SeedResult]) -> Vec<Aggregate> {
        STUDY_METRICS
            .iter()
            .filter_map(|m| {
                let values: Vec<f64> = per_seed
                    .iter()
                    .filter(|r| r.error.is_none())
                    .filter_map(|r| r.metric(m))
                    .collect();
                Aggregate::of(m, &values)
            })
            .collect()
    }
}

/// Trains `n_seeds` models that differ only in their initialization and
/// shuffle seeds `base_seed, base_seed + 1, ...`.
pub fn seed_study(
    config: &TrialConfig,
    n_seeds: usize,
    base_seed: u64,
    base: &TrainConfig,
    train_set: &SampleSet,
    eval: &SampleSet,
    workers: usize,
) -> Result<SeedStudyReport> {
    let seeds: Vec<u64> = (0..n_seeds as u64).map(|i| base_seed.wrapping_add(i)).collect();
    seed_study_with_seeds(config, &seeds, base, train_set, eval, workers)
}

pub fn seed_study_with_seeds(
    config: &TrialConfig,
    seeds: &[u64],
    base: &TrainConfig,
    train_set: &SampleSet,
    eval: &SampleSet,
    workers: usize,
) -> Result<SeedStudyReport> {
    if seeds.len() < 2 {
        return Err(Error::Config("a seed study needs at least 2 seeds".into()));
    }
    let tc = config.train_config(base);
    tc.validate()?;
    let per_seed: Vec<SeedResult> = with_workers(workers, || {
        seeds
            .par_iter()
            .map(|&seed| {
                let outcome = (|| -> Result<_> {
                    let net = init_network(&config.network_config(train_set.width(), seed))?;
                    let cfg = TrainConfig {
                        shuffle_seed: seed,
                        ..tc.clone()
                    };
                    let (net, _, _) = train(net, train_set, &cfg)?;
                    Ok(evaluate(&net, eval, 0.5)?.0)
                })();
                match outcome {
                    Ok(e) => SeedResult {
                        seed,
                        acc: e.rates.acc,
                        tpr: e.rates.tpr,
                        tnr: e.rates.tnr,
                        fpr: e.rates.fpr,
                        f1: e.rates.f1,
                        auc: e.auc,
                        error: None,
                    },
                    Err(e) => {
                        log::warn!("seed {seed} failed: {e}");
                        SeedResult {
                            seed,
                            acc: None,
                            tpr: None,
                            tnr: None,
                            fpr: None,
                            f1: None,
                            auc: None,
                            error: Some(e.to_string()),
                        }
                    }
                }
            })
            .collect()
    })?;
    let failures = per_seed.iter().filter(|r| r.error.is_some()).count();
    Ok(SeedStudyReport {
        config: config.clone(),
        iterations: tc.iterations,
        aggregates: SeedStudyReport::aggregate_all(&per_seed),
        per_seed,
        failures,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Per-seed rows: `seed,acc,tpr,tnr,fpr,f1,auc,error`.
pub fn write_seed_study_csv(path: &Path, report: &SeedStudyReport) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_seed_rows(std::io::BufWriter::new(file), report).map_err(|e| Error::io(path, e))
}

pub fn write_seed_rows<W: Write>(writer: W, report: &SeedStudyReport) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["seed", "acc", "tpr", "tnr", "fpr", "f1", "auc", "error"])?;
    for r in &report.per_seed {
        w.write_record([
            r.seed.to_string(),
            opt(r.acc),
            opt(r.tpr),
            opt(r.tnr),
            opt(r.fpr),
            opt(r.f1),
            opt(r.auc),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()
}

/// Aggregate rows: `metric,count,min,q25,mean,median,q75,max,std`.
pub fn write_summary_rows<W: Write>(writer: W, report: &SeedStudyReport) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["metric", "count", "min", "q25", "mean", "median", "q75", "max", "std"])?;
    for a in &report.aggregates {
        w.write_record([
            a.metric.clone(),
            a.count.to_string(),
            a.min.to_string(),
            a.q25.to_string(),
            a.mean.to_string(),
            a.median.to_string(),
            a.q75.to_string(),
            a.max.to_string(),
            a.std.to_string(),
        ])?;
    }
    w.flush()
}

/// One operating point per seed: `seed,fpr,tpr`.
pub fn write_roc_points_csv(path: &Path, report: &SeedStudyReport) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let io = |e: csv::Error| Error::io(path, e.into());
    w.write_record(["seed", "fpr", "tpr"]).map_err(io)?;
    for r in report.per_seed.iter().filter(|r| r.error.is_none()) {
        w.write_record([r.seed.to_string(), opt(r.fpr), opt(r.tpr)]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
