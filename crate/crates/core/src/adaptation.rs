//! Transfer of a trained model to a new building by continued training.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{evaluate, Network, OptimizerState, TrainConfig, Trainer};
use crate::timeseries::{FeatureSchema, SampleSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptationPlan {
    /// Iterations per step.
    pub step_iterations: u64,
    pub max_steps: usize,
    /// Stop once F1 varies by less than `plateau_tolerance` over this many steps.
    pub plateau_steps: usize,
    pub plateau_tolerance: f64,
    /// Keep the base model's Adagrad accumulators instead of resetting them.
    pub carry_optimizer: bool,
    pub threshold: f64,
    pub train: TrainConfig,
}

impl Default for AdaptationPlan {
    fn default() -> Self {
        Self {
            step_iterations: 1000,
            max_steps: 12,
            plateau_steps: 3,
            plateau_tolerance: 0.002,
            carry_optimizer: false,
            threshold: 0.5,
            train: TrainConfig::default(),
        }
    }
}

impl AdaptationPlan {
    pub fn validate(&self) -> Result<()> {
        if self.step_iterations < 1 {
            return Err(Error::Config("adaptation step must be at least one iteration".into()));
        }
        if self.plateau_steps < 1 {
            return Err(Error::Config("plateau window must be at least one step".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config("threshold must be in [0, 1]".into()));
        }
        self.train.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub step: usize,
    pub iterations: u64,
    pub epochs: f64,
    pub f1: Option<f64>,
    pub acc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AdaptationTrace {
    pub records: Vec<TraceRecord>,
}

impl AdaptationTrace {
    pub fn initial(&self) -> Option<&TraceRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    pub fn write_csv_to<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["step", "iterations", "epochs", "f1", "acc"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            w.write_record([
                r.step.to_string(),
                r.iterations.to_string(),
                r.epochs.to_string(),
                opt(r.f1),
                opt(r.acc),
            ])?;
        }
        w.flush()
    }
}

/// Splits every office's samples in time order: the first `n_adapt` go to the
/// adaptation set, the rest to the evaluation set.
pub fn split_sequential(samples: &SampleSet, n_adapt: usize) -> Result<(SampleSet, SampleSet)> {
    if n_adapt == 0 {
        return Err(Error::Invalid("adaptation set must not be empty".into()));
    }
    let mut by_office: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, o) in samples.office_ids.iter().enumerate() {
        by_office.entry(o).or_default().push(i);
    }
    let (mut adapt, mut eval) = (Vec::new(), Vec::new());
    for (office, mut idx) in by_office {
        if n_adapt >= idx.len() {
            return Err(Error::Invalid(format!(
                "office `{office}` has {} samples, fewer than n_adapt + 1 = {}",
                idx.len(),
                n_adapt + 1
            )));
        }
        idx.sort_by_key(|&i| samples.timestamps[i]);
        adapt.extend_from_slice(&idx[..n_adapt]);
        eval.extend_from_slice(&idx[n_adapt..]);
    }
    Ok((samples.select(&adapt), samples.select(&eval)))
}

/// Fails unless the two sets share no (office, timestamp) record and every
/// office's adaptation samples precede its evaluation samples.
pub fn check_disjoint(adapt: &SampleSet, eval: &SampleSet) -> Result<()> {
    let mut last_adapt: BTreeMap<&str, i64> = BTreeMap::new();
    let mut keys = BTreeSet::new();
    for (o, &t) in adapt.office_ids.iter().zip(&adapt.timestamps) {
        keys.insert((o.as_str(), t));
        let e = last_adapt.entry(o).or_insert(t);
        *e = (*e).max(t);
    }
    for (o, &t) in eval.office_ids.iter().zip(&eval.timestamps) {
        if keys.contains(&(o.as_str(), t)) {
            return Err(Error::Invalid(format!("sample {o}@{t} is in both adaptation and evaluation sets")));
        }
        if last_adapt.get(o.as_str()).is_some_and(|&last| last >= t) {
            return Err(Error::Invalid(format!("evaluation sample {o}@{t} precedes adaptation data")));
        }
    }
    Ok(())
}

fn check_schema(samples: &SampleSet, schema: &FeatureSchema) -> Result<()> {
    let keys = schema.keys();
    if samples.feature_names == keys {
        return Ok(());
    }
    let missing: Vec<String> = keys.iter().filter(|k| !samples.feature_names.contains(k)).cloned().collect();
    if missing.is_empty() {
        return Err(Error::Dimension(format!(
            "sample features {:?} are not in schema order {:?}",
            samples.feature_names, keys
        )));
    }
    Err(Error::IncompatibleSchema { missing })
}

#[derive(Debug, Clone)]
pub struct AdaptOutcome {
    pub network: Network,
    pub optimizer: OptimizerState,
    pub trace: AdaptationTrace,
}

/// Continues training `base` on `adapt_set` in steps of
/// `plan.step_iterations`, evaluating on `eval_set` before the first step and
/// after each one.
pub fn adapt(
    base: &Network,
    base_optimizer: Option<&OptimizerState>,
    schema: &FeatureSchema,
    plan: &AdaptationPlan,
    adapt_set: &SampleSet,
    eval_set: &SampleSet,
) -> Result<AdaptOutcome> {
    plan.validate()?;
    check_schema(adapt_set, schema)?;
    check_schema(eval_set, schema)?;
    check_disjoint(adapt_set, eval_set)?;
    if eval_set.is_empty() {
        return Err(Error::Invalid("evaluation set must not be empty".into()));
    }
    let state = if plan.carry_optimizer {
        base_optimizer.cloned()
    } else {
        None
    };
    let mut trainer = Trainer::new(base.clone(), state, adapt_set, &plan.train)?;
    let mut trace = AdaptationTrace::default();
    let record = |trace: &mut AdaptationTrace, step: usize, net: &Network, iterations: u64| -> Result<()> {
        let (e, _) = evaluate(net, eval_set, plan.threshold)?;
        log::info!("adaptation step {step}: f1 {:?} acc {:?}", e.rates.f1, e.rates.acc);
        trace.records.push(TraceRecord {
            step,
            iterations,
            epochs: epochs(iterations, plan.train.batch_size, adapt_set.len()),
            f1: e.rates.f1,
            acc: e.rates.acc,
        });
        Ok(())
    };
    record(&mut trace, 0, trainer.network(), 0)?;
    for step in 1..=plan.max_steps {
        trainer.run(plan.step_iterations)?;
        record(&mut trace, step, trainer.network(), trainer.iteration())?;
        if plateaued(&trace, plan.plateau_steps, plan.plateau_tolerance) {
            break;
        }
    }
    let (network, optimizer, _) = trainer.finish();
    Ok(AdaptOutcome {
        network,
        optimizer,
        trace,
    })
}

/// Passes over the adaptation set: `iterations * batch / size`.
pub fn epochs(iterations: u64, batch_size: usize, adapt_size: usize) -> f64 {
    iterations as f64 * batch_size as f64 / adapt_size as f64
}

fn plateaued(trace: &AdaptationTrace, window: usize, tolerance: f64) -> bool {
    let n = trace.records.len();
    if n < window + 1 {
        return false;
    }
    let f1: Vec<f64> = trace.records[n - window - 1..].iter().map(|r| r.f1.unwrap_or(0.0)).collect();
    let max = f1.iter().cloned().fold(f64::MIN, f64::max);
    let min = f1.iter().cloned().fold(f64::MAX, f64::min);
    max - min < tolerance
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_network, NetworkConfig};
    use crate::timeseries::FeatureDef;

    fn schema() -> FeatureSchema {
        FeatureSchema {
            label: "window_state".into(),
            input_width: None,
            features: vec![FeatureDef::new("a", "-", 0.0, 1.0), FeatureDef::new("b", "-", 0.0, 1.0)],
        }
    }

    fn stream(offices: &[&str], n: usize) -> SampleSet {
        let mut s = SampleSet::new(schema().keys());
        for k in 0..n {
            for (j, o) in offices.iter().enumerate() {
                let x = ((k * 7 + j * 3) % 11) as f64 / 10.0;
                let y = ((k * 5 + j) % 13) as f64 / 12.0;
                s.push(&[x, y], x + y > 1.0, 1000 + 600 * k as i64, o);
            }
        }
        s
    }

    #[test]
    fn split_is_sequential() {
        let s = stream(&["o"], 10);
        let (a, e) = split_sequential(&s, 6).unwrap();
        assert_eq!(a.timestamps, (0..6).map(|k| 1000 + 600 * k).collect::<Vec<i64>>());
        assert_eq!(e.timestamps, (6..10).map(|k| 1000 + 600 * k).collect::<Vec<i64>>());
        assert!(split_sequential(&s, 0).is_err());
        assert!(split_sequential(&s, 10).is_err());
    }

    #[test]
    fn split_applies_per_office() {
        let s = stream(&["x", "y"], 5);
        let (a, e) = split_sequential(&s, 2).unwrap();
        let keys = |set: &SampleSet| -> Vec<(String, i64)> {
            set.office_ids.iter().cloned().zip(set.timestamps.iter().cloned()).collect()
        };
        assert_eq!(
            keys(&a),
            vec![("x".into(), 1000), ("x".into(), 1600), ("y".into(), 1000), ("y".into(), 1600)]
        );
        assert_eq!(e.len(), 6);
        assert!(e.timestamps.iter().all(|&t| t >= 2200));
        check_disjoint(&a, &e).unwrap();
        assert!(check_disjoint(&a, &a).is_err());
    }

    fn net() -> Network {
        init_network(&NetworkConfig::new(2).with_hidden(&[4]).with_seed(3)).unwrap()
    }

    fn plan(max_steps: usize) -> AdaptationPlan {
        AdaptationPlan {
            step_iterations: 5,
            max_steps,
            train: TrainConfig {
                batch_size: 128,
                ..TrainConfig::default()
            },
            ..AdaptationPlan::default()
        }
    }

    #[test]
    fn zero_steps_is_a_no_op() {
        let (a, e) = split_sequential(&stream(&["o"], 300), 200).unwrap();
        let base = net();
        let out = adapt(&base, None, &schema(), &plan(0), &a, &e).unwrap();
        assert_eq!(out.network, base);
        assert_eq!(out.trace.records.len(), 1);
        assert_eq!(out.trace.records[0].iterations, 0);
    }

    #[test]
    fn trace_reports_epochs_and_increasing_iterations() {
        let (a, e) = split_sequential(&stream(&["o"], 300), 200).unwrap();
        let p = AdaptationPlan {
            plateau_tolerance: 0.0,
            ..plan(4)
        };
        let out = adapt(&net(), None, &schema(), &p, &a, &e).unwrap();
        assert_eq!(out.trace.records.len(), 5);
        for w in out.trace.records.windows(2) {
            assert!(w[1].iterations > w[0].iterations);
        }
        let last = out.trace.last().unwrap();
        assert!((last.epochs - 20.0 * 128.0 / 200.0).abs() < 1e-12);
    }

    #[test]
    fn epochs_follow_iterations_times_batch_over_size() {
        assert!((epochs(8000, 4096, 24_000) - 1365.33).abs() < 0.01);
    }

    #[test]
    fn plateau_stops_early() {
        let (a, e) = split_sequential(&stream(&["o"], 300), 200).unwrap();
        let p = AdaptationPlan {
            plateau_tolerance: 2.0,
            ..plan(10)
        };
        let out = adapt(&net(), None, &schema(), &p, &a, &e).unwrap();
        assert_eq!(out.trace.records.len(), 4);
    }

    #[test]
    fn schema_mismatch_names_missing_features() {
        let (a, e) = split_sequential(&stream(&["o"], 300), 200).unwrap();
        let mut wide = schema();
        wide.features.push(FeatureDef::new("co2", "ppm", 0.0, 2500.0));
        let err = adapt(&net(), None, &wide, &plan(1), &a, &e).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("co2") && msg.contains("imputation"), "{msg}");
    }

    #[test]
    fn overlapping_sets_are_rejected() {
        let s = stream(&["o"], 300);
        let err = adapt(&net(), None, &schema(), &plan(1), &s, &s).unwrap_err();
        assert!(err.to_string().contains("both"));
    }
}
