use std::io::{Read, Write};
use std::path::Path;

use super::schema::{scale, FeatureSchema};
use super::table::TimeSeriesTable;
use crate::error::{Error, Result};
use crate::util;

/// Borrowed view of one labeled, scaled input vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample<'a> {
    pub features: &'a [f64],
    pub label: bool,
    pub timestamp: i64,
    pub office_id: &'a str,
}

/// Scaled samples stored row-major.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleSet {
    pub feature_names: Vec<String>,
    pub features: Vec<f64>,
    pub labels: Vec<bool>,
    pub timestamps: Vec<i64>,
    pub office_ids: Vec<String>,
    /// Records skipped because the window label was missing.
    pub unlabeled: usize,
    /// Labeled records skipped for a missing current or lagged feature.
    pub incomplete: usize,
}

impl SampleSet {
    pub fn new(feature_names: Vec<String>) -> Self {
        Self {
            feature_names,
            ..Default::default()
        }
    }

    pub fn width(&self) -> usize {
        self.feature_names.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn skipped(&self) -> usize {
        self.unlabeled + self.incomplete
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.features[i * w..(i + 1) * w]
    }

    pub fn get(&self, i: usize) -> Sample<'_> {
        Sample {
            features: self.row(i),
            label: self.labels[i],
            timestamp: self.timestamps[i],
            office_id: &self.office_ids[i],
        }
    }

    pub fn push(&mut self, features: &[f64], label: bool, timestamp: i64, office_id: &str) {
        debug_assert_eq!(features.len(), self.width());
        self.features.extend_from_slice(features);
        self.labels.push(label);
        self.timestamps.push(timestamp);
        self.office_ids.push(office_id.to_string());
    }

    /// Subset by indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut out = Self::new(self.feature_names.clone());
        for &i in indices {
            out.push(self.row(i), self.labels[i], self.timestamps[i], &self.office_ids[i]);
        }
        out
    }

    pub fn filter_offices(&self, offices: &[String]) -> Self {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| offices.contains(&self.office_ids[i]))
            .collect();
        self.select(&idx)
    }

    /// Distinct office ids in first-appearance order.
    pub fn offices(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for o in &self.office_ids {
            if !out.contains(o) {
                out.push(o.clone());
            }
        }
        out
    }

    /// Indices of one office sorted by timestamp.
    pub fn office_indices(&self, office: &str) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).filter(|&i| self.office_ids[i] == office).collect();
        idx.sort_by_key(|&i| self.timestamps[i]);
        idx
    }

    pub fn append(&mut self, other: &SampleSet) -> Result<()> {
        if other.feature_names != self.feature_names {
            return Err(Error::Dimension("sample sets have different features".into()));
        }
        self.features.extend_from_slice(&other.features);
        self.labels.extend_from_slice(&other.labels);
        self.timestamps.extend_from_slice(&other.timestamps);
        self.office_ids.extend(other.office_ids.iter().cloned());
        Ok(())
    }

    pub fn positive_fraction(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.labels.iter().filter(|&&l| l).count() as f64 / self.len() as f64
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    /// `timestamp,office_id,<feature keys...>,label` with full-precision values.
    pub fn write_csv_to<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["timestamp".to_string(), "office_id".to_string()];
        header.extend(self.feature_names.iter().cloned());
        header.push("label".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![self.timestamps[i].to_string(), self.office_ids[i].clone()];
            rec.extend(self.row(i).iter().map(|v| v.to_string()));
            rec.push(if self.labels[i] { "1" } else { "0" }.to_string());
            w.write_record(&rec)?;
        }
        w.flush()
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv_from(file)
    }

    pub fn read_csv_from<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
            .iter()
            .map(str::to_string)
            .collect();
        if headers.len() < 4
            || headers[0] != "timestamp"
            || headers[1] != "office_id"
            || headers.last().map(String::as_str) != Some("label")
        {
            return Err(Error::Parse {
                line: 1,
                message: "samples header must be timestamp,office_id,<features...>,label".into(),
            });
        }
        let names = headers[2..headers.len() - 1].to_vec();
        let mut set = SampleSet::new(names);
        let mut buf = Vec::with_capacity(set.width());
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Parse {
                line: e.position().map(|p| p.line()).unwrap_or(0),
                message: e.to_string(),
            })?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let perr = |m: String| Error::Parse { line, message: m };
            let ts: i64 = rec[0].parse().map_err(|_| perr(format!("bad timestamp `{}`", &rec[0])))?;
            buf.clear();
            for f in rec.iter().skip(2).take(set.width()) {
                let v: f64 = f.parse().map_err(|_| perr(format!("bad value `{f}`")))?;
                if !v.is_finite() {
                    return Err(perr(format!("non-finite value `{f}`")));
                }
                buf.push(v);
            }
            let label = match &rec[rec.len() - 1] {
                "0" => false,
                "1" => true,
                other => return Err(perr(format!("label must be 0 or 1, got `{other}`"))),
            };
            set.push(&buf, label, ts, &rec[1]);
        }
        Ok(set)
    }
}

/// Turns a joined, imputed table into scaled samples.
///
/// A record yields a sample when it is labeled, has every current feature,
/// and has every lagged feature exactly `lag_minutes` earlier within the same
/// gap-free segment.
pub fn build_samples(table: &TimeSeriesTable, schema: &FeatureSchema) -> Result<SampleSet> {
    schema.validate()?;
    if schema.label != super::LABEL_CHANNEL {
        return Err(Error::Config(format!(
            "unsupported label `{}`, expected `{}`",
            schema.label,
            super::LABEL_CHANNEL
        )));
    }
    enum Source {
        Hour,
        DayOfWeek,
        Timestamp,
        Column(usize),
    }
    let mut missing = Vec::new();
    let sources: Vec<Source> = schema
        .features
        .iter()
        .map(|f| match f.name.as_str() {
            "hour" => Source::Hour,
            "day_of_week" => Source::DayOfWeek,
            "timestamp" => Source::Timestamp,
            name => match table.column_index(name) {
                Some(i) => Source::Column(i),
                None => {
                    if !missing.contains(&f.name) {
                        missing.push(f.name.clone());
                    }
                    Source::Column(usize::MAX)
                }
            },
        })
        .collect();
    if !missing.is_empty() {
        return Err(Error::IncompatibleSchema { missing });
    }

    let mut set = SampleSet::new(schema.keys());
    let offset = table.utc_offset_minutes;
    let mut vector = vec![0.0; schema.width()];
    for (office, range) in table.office_ranges() {
        let rows = &table.rows()[range.clone()];
        let ts: Vec<i64> = rows.iter().map(|r| r.timestamp).collect();
        let seg = util::segment_ids(&ts, table.cadence());
        'rows: for (k, row) in rows.iter().enumerate() {
            let Some(label) = row.window_state else {
                set.unlabeled += 1;
                continue;
            };
            for (j, (f, src)) in schema.features.iter().zip(&sources).enumerate() {
                let at = if f.is_lagged() {
                    let target = row.timestamp - i64::from(f.lag_minutes) * 60;
                    match ts[..k].binary_search(&target) {
                        Ok(p) if seg[p] == seg[k] => p,
                        _ => {
                            set.incomplete += 1;
                            continue 'rows;
                        }
                    }
                } else {
                    k
                };
                let t = rows[at].timestamp;
                let raw = match src {
                    Source::Hour => Some(f64::from(util::local_hour(t, offset))),
                    Source::DayOfWeek => Some(f64::from(util::local_day_of_week(t, offset))),
                    Source::Timestamp => Some(t as f64),
                    Source::Column(i) => rows[at].values[*i],
                };
                match raw {
                    Some(v) => vector[j] = scale(v, f)?,
                    None => {
                        set.incomplete += 1;
                        continue 'rows;
                    }
                }
            }
            set.push(&vector, label, row.timestamp, &office);
        }
    }
    Ok(set)
}
