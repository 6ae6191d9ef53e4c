use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::office::{gen_office, OfficeData, OfficeSpec};
use super::rule::BehaviorRule;
use super::{gen_weather, SynthConfig};
use crate::error::{Error, Result};
use crate::timeseries::TimeSeriesTable;
use crate::util;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Archetype {
    A,
    B,
    C,
    Outlier,
}

impl Archetype {
    pub const ALL: [Archetype; 4] = [Archetype::A, Archetype::B, Archetype::C, Archetype::Outlier];

    pub fn as_str(self) -> &'static str {
        match self {
            Archetype::A => "A",
            Archetype::B => "B",
            Archetype::C => "C",
            Archetype::Outlier => "outlier",
        }
    }

    pub fn is_outlier(self) -> bool {
        self == Archetype::Outlier
    }
}

impl std::fmt::Display for Archetype {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Archetype {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Archetype::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown archetype {s:?}")))
    }
}

/// A: cool, single-person office that ventilates often.
/// B: warm, shared office that rarely opens.
/// C: in between.
fn archetype_spec(kind: Archetype) -> (BehaviorRule, f64, f64) {
    let base = BehaviorRule {
        hysteresis: 2.0,
        ..BehaviorRule::default()
    };
    match kind {
        Archetype::A => (
            BehaviorRule {
                intercept: 0.4,
                hysteresis: 1.2,
                w_presence: 1.0,
                w_indoor_temp: 0.8,
                w_co2: 0.8,
                w_outdoor_temp: 1.5,
                ..base
            },
            20.5,
            1.0,
        ),
        Archetype::B => (
            BehaviorRule {
                intercept: -2.8,
                hysteresis: 3.0,
                w_presence: 0.5,
                w_indoor_temp: 0.6,
                w_co2: 0.4,
                w_outdoor_temp: 1.2,
                ..base
            },
            24.0,
            2.0,
        ),
        Archetype::C | Archetype::Outlier => (
            BehaviorRule {
                intercept: -0.8,
                w_presence: 0.8,
                w_indoor_temp: 0.7,
                w_co2: 0.6,
                w_outdoor_temp: 1.3,
                ..base
            },
            22.0,
            2.0,
        ),
    }
}

/// Splits `n` into counts proportional to `weights` by largest remainder.
pub(crate) fn allocate(n: usize, weights: &[f64]) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / total * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let mut left = n - counts.iter().sum::<usize>();
    for i in order {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Draws the office specs and archetype tags for a configuration.
pub fn draw_specs(config: &SynthConfig) -> Result<Vec<(OfficeSpec, Archetype)>> {
    config.validate()?;
    if config.offices < 4 {
        return Err(Error::Config("a population needs at least 4 offices".into()));
    }
    let counts = allocate(config.offices, &config.mixture);
    let mut tags: Vec<Archetype> = Archetype::ALL
        .iter()
        .zip(&counts)
        .flat_map(|(a, &c)| std::iter::repeat(*a).take(c))
        .collect();
    let mut rng = util::stream_rng(config.seed, u64::MAX - 1);
    tags.shuffle(&mut rng);
    let width = (config.offices - 1).to_string().len().max(2);
    let p = config.perturbation;
    let mut out = Vec::with_capacity(tags.len());
    for (i, kind) in tags.into_iter().enumerate() {
        let mut r = util::stream_rng(config.seed, u64::MAX - 2 - i as u64);
        let (mut rule, mut setpoint, mut persons) = archetype_spec(kind);
        let jitter = |r: &mut rand_chacha::ChaCha8Rng, sd: f64| Normal::new(0.0, sd).unwrap().sample(r);
        if kind.is_outlier() {
            setpoint = r.gen_range(18.5..25.5);
            persons = r.gen_range(1..=3) as f64;
            rule.intercept = r.gen_range(-4.1..-1.1);
            rule.w_presence = r.gen_range(0.0..2.0);
            rule.w_indoor_temp = r.gen_range(0.3..1.6);
            rule.w_co2 = r.gen_range(0.0..1.5);
            rule.w_outdoor_temp = r.gen_range(0.0..1.5);
            rule.w_hour_cos = r.gen_range(-1.0..1.0);
            rule.w_hour_sin = r.gen_range(-1.0..1.0);
            rule.hysteresis = r.gen_range(1.5..3.5);
        }
        setpoint += jitter(&mut r, 0.3 * p);
        rule.intercept += jitter(&mut r, 0.1 * p);
        for w in [
            &mut rule.w_indoor_temp,
            &mut rule.w_co2,
            &mut rule.w_outdoor_temp,
            &mut rule.w_presence,
        ] {
            *w *= (1.0 + jitter(&mut r, 0.05 * p)).max(0.0);
        }
        rule.noise = config.noise;
        let mut spec = OfficeSpec::new(&format!("office_{i:0width$}"), rule);
        spec.setpoint = setpoint.clamp(18.0, 26.0);
        spec.persons = persons;
        spec.arrival_h += jitter(&mut r, 0.5 * p);
        spec.departure_h += jitter(&mut r, 0.5 * p);
        out.push((spec, kind));
    }
    Ok(out)
}

/// A generated building: shared weather, per-office indoor series and the
/// ground truth behind them.
#[derive(Debug, Clone)]
pub struct Population {
    pub weather: TimeSeriesTable,
    pub indoor: TimeSeriesTable,
    pub specs: Vec<OfficeSpec>,
    pub archetypes: Vec<Archetype>,
    pub truth: Vec<Vec<bool>>,
}

impl Population {
    /// Generates the offices of `specs` in parallel against one weather series.
    pub fn build(config: &SynthConfig, specs: Vec<(OfficeSpec, Archetype)>) -> Result<Self> {
        let weather = gen_weather(config);
        let data: Vec<OfficeData> = specs
            .par_iter()
            .enumerate()
            .map(|(i, (spec, _))| gen_office(config, spec, &weather, i as u64))
            .collect::<Result<_>>()?;
        let tables: Vec<TimeSeriesTable> = data.iter().map(|d| d.table.clone()).collect();
        let indoor = TimeSeriesTable::concat(&tables).ok_or_else(|| Error::Invalid("empty population".into()))?;
        let (specs, archetypes) = specs.into_iter().unzip();
        Ok(Self {
            weather,
            indoor,
            specs,
            archetypes,
            truth: data.into_iter().map(|d| d.truth).collect(),
        })
    }

    pub fn archetype_of(&self, office_id: &str) -> Option<Archetype> {
        self.specs
            .iter()
            .position(|s| s.office_id == office_id)
            .map(|i| self.archetypes[i])
    }

    pub fn office_ids(&self) -> Vec<String> {
        self.specs.iter().map(|s| s.office_id.clone()).collect()
    }
}

pub fn gen_population(config: &SynthConfig) -> Result<Population> {
    Population::build(config, draw_specs(config)?)
}

pub fn write_ground_truth(path: &Path, population: &Population) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_ground_truth_to(std::io::BufWriter::new(file), population).map_err(|e| Error::io(path, e))
}

pub fn write_ground_truth_to<W: Write>(writer: W, population: &Population) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "office_id",
        "archetype",
        "setpoint",
        "persons",
        "intercept",
        "temp_reference",
        "w_indoor_temp",
        "w_co2",
        "w_outdoor_temp",
        "w_presence",
        "w_hour_cos",
        "w_hour_sin",
        "hysteresis",
        "noise",
    ])?;
    for (s, a) in population.specs.iter().zip(&population.archetypes) {
        let r = &s.rule;
        let mut rec = vec![s.office_id.clone(), a.to_string()];
        rec.extend(
            [
                s.setpoint,
                s.persons,
                r.intercept,
                r.temp_reference,
                r.w_indoor_temp,
                r.w_co2,
                r.w_outdoor_temp,
                r.w_presence,
                r.w_hour_cos,
                r.w_hour_sin,
                r.hysteresis,
                r.noise,
            ]
            .iter()
            .map(|v| v.to_string()),
        );
        w.write_record(&rec)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fifty_two_offices_and_tags() {
        let cfg = SynthConfig { days: 2, ..Default::default() };
        let pop = gen_population(&cfg).unwrap();
        assert_eq!(pop.indoor.offices().len(), 52);
        assert_eq!(pop.archetypes.len(), 52);
        let count = |a| pop.archetypes.iter().filter(|&&x| x == a).count();
        assert_eq!(
            [Archetype::A, Archetype::B, Archetype::C, Archetype::Outlier].map(count),
            [16, 13, 10, 13]
        );
        let mut buf = Vec::new();
        write_ground_truth_to(&mut buf, &pop).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 53);
    }

    #[test]
    fn rejects_tiny_population() {
        let cfg = SynthConfig { offices: 3, days: 1, ..Default::default() };
        assert!(gen_population(&cfg).is_err());
    }

    #[test]
    fn bit_reproducible() {
        let cfg = SynthConfig { offices: 5, days: 3, seed: 11, ..Default::default() };
        let a = gen_population(&cfg).unwrap();
        let b = gen_population(&cfg).unwrap();
        assert_eq!(a.indoor.rows(), b.indoor.rows());
        assert_eq!(a.archetypes, b.archetypes);
    }

    #[test]
    fn archetype_round_trips_through_text() {
        for a in Archetype::ALL {
            assert_eq!(a.as_str().parse::<Archetype>().unwrap(), a);
        }
    }

    proptest! {
        #[test]
        fn allocation_matches_mixture(n in 4usize..200, w in proptest::collection::vec(0.0f64..1.0, 4)) {
            prop_assume!(w.iter().sum::<f64>() > 0.1);
            let counts = allocate(n, &w);
            prop_assert_eq!(counts.iter().sum::<usize>(), n);
            let total: f64 = w.iter().sum();
            for (c, x) in counts.iter().zip(&w) {
                prop_assert!((*c as f64 - x / total * n as f64).abs() < 1.0);
            }
        }
    }
}
