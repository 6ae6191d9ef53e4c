use std::collections::BTreeSet;
use std::ops::Range;

use crate::util;

/// One timestamped record. Channel values are aligned with the owning
/// table's `columns`; `None` marks a missing value.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub timestamp: i64,
    pub office_id: String,
    pub values: Vec<Option<f64>>,
    pub window_state: Option<bool>,
}

/// Records of one or more offices (or of a weather station), sorted by
/// `(office_id, timestamp)` with unique timestamps per office.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesTable {
    columns: Vec<String>,
    rows: Vec<Row>,
    /// Columns filled by imputation rather than measured.
    pub imputed: BTreeSet<String>,
    /// Nominal cadence in seconds; inferred when not set explicitly.
    pub cadence_s: Option<i64>,
    /// Offset of the building's civil time from UTC, used for hour and
    /// day-of-week features.
    pub utc_offset_minutes: i32,
}

impl TimeSeriesTable {
    /// Builds a table, sorting rows and collapsing duplicate timestamps within
    /// an office to the last occurrence.
    pub fn new(columns: Vec<String>, rows: Vec<Row>) -> Self {
        let mut indexed: Vec<(usize, Row)> = rows.into_iter().enumerate().collect();
        indexed.sort_by(|(ia, a), (ib, b)| {
            a.office_id
                .cmp(&b.office_id)
                .then(a.timestamp.cmp(&b.timestamp))
                .then(ia.cmp(ib))
        });
        let mut rows: Vec<Row> = Vec::with_capacity(indexed.len());
        for (_, row) in indexed {
            match rows.last_mut() {
                Some(last) if last.office_id == row.office_id && last.timestamp == row.timestamp => {
                    *last = row;
                }
                _ => rows.push(row),
            }
        }
        let mut table = Self {
            columns,
            rows,
            imputed: BTreeSet::new(),
            cadence_s: None,
            utc_offset_minutes: 0,
        };
        table.cadence_s = table.infer_cadence();
        table
    }

    pub fn with_cadence(mut self, cadence_s: i64) -> Self {
        self.cadence_s = Some(cadence_s);
        self
    }

    pub fn with_utc_offset(mut self, minutes: i32) -> Self {
        self.utc_offset_minutes = minutes;
        self
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.column_index(name).is_some()
    }

    pub fn value(&self, row: &Row, name: &str) -> Option<f64> {
        self.column_index(name).and_then(|i| row.values[i])
    }

    /// Distinct office ids in sorted order.
    pub fn offices(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if out.last() != Some(&r.office_id) {
                out.push(r.office_id.clone());
            }
        }
        out
    }

    /// Contiguous row range of one office.
    pub fn office_range(&self, office_id: &str) -> Range<usize> {
        let start = self.rows.partition_point(|r| r.office_id.as_str() < office_id);
        let end = self.rows.partition_point(|r| r.office_id.as_str() <= office_id);
        start..end
    }

    pub fn office_rows(&self, office_id: &str) -> &[Row] {
        &self.rows[self.office_range(office_id)]
    }

    pub fn office_ranges(&self) -> Vec<(String, Range<usize>)> {
        self.offices()
            .into_iter()
            .map(|o| {
                let r = self.office_range(&o);
                (o, r)
            })
            .collect()
    }

    pub fn time_range(&self) -> Option<(i64, i64)> {
        let min = self.rows.iter().map(|r| r.timestamp).min()?;
        let max = self.rows.iter().map(|r| r.timestamp).max()?;
        Some((min, max))
    }

    pub fn cadence(&self) -> i64 {
        self.cadence_s.unwrap_or(600)
    }

    fn infer_cadence(&self) -> Option<i64> {
        let mut counts = std::collections::BTreeMap::new();
        for w in self.rows.windows(2) {
            if w[0].office_id == w[1].office_id {
                *counts.entry(w[1].timestamp - w[0].timestamp).or_insert(0usize) += 1;
            }
        }
        counts
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(d, _)| d)
    }

    /// Segment id per row of one office (gap > 2x cadence breaks a segment).
    pub fn segment_ids(&self, range: Range<usize>) -> Vec<usize> {
        let ts: Vec<i64> = self.rows[range].iter().map(|r| r.timestamp).collect();
        util::segment_ids(&ts, self.cadence())
    }

    /// Adds a column, returning its index. Existing columns are reused.
    pub(crate) fn add_column(&mut self, name: &str) -> usize {
        if let Some(i) = self.column_index(name) {
            return i;
        }
        self.columns.push(name.to_string());
        for r in &mut self.rows {
            r.values.push(None);
        }
        self.columns.len() - 1
    }

    pub(crate) fn rows_mut(&mut self) -> &mut [Row] {
        &mut self.rows
    }

    /// Keeps only rows of the given offices.
    pub fn filter_offices(&self, offices: &[String]) -> Self {
        let mut out = self.clone();
        out.rows.retain(|r| offices.contains(&r.office_id));
        out
    }

    /// Drops the named columns (used to emulate sparse data sets).
    pub fn drop_columns(&self, names: &[&str]) -> Self {
        let keep: Vec<usize> = (0..self.columns.len())
            .filter(|&i| !names.contains(&self.columns[i].as_str()))
            .collect();
        let mut out = self.clone();
        out.columns = keep.iter().map(|&i| self.columns[i].clone()).collect();
        for r in &mut out.rows {
            r.values = keep.iter().map(|&i| r.values[i]).collect();
        }
        out.imputed.retain(|c| !names.contains(&c.as_str()));
        out
    }

    /// Concatenates tables with identical columns.
    pub fn concat(tables: &[TimeSeriesTable]) -> Option<Self> {
        let first = tables.first()?;
        let mut rows = Vec::new();
        for t in tables {
            if t.columns != first.columns {
                return None;
            }
            rows.extend(t.rows.iter().cloned());
        }
        let mut out = Self::new(first.columns.clone(), rows);
        out.cadence_s = first.cadence_s;
        out.utc_offset_minutes = first.utc_offset_minutes;
        out.imputed = first.imputed.clone();
        Some(out)
    }
}
