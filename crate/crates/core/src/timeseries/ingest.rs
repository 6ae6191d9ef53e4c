use std::io::{Read, Write};
use std::path::Path;

use super::table::{Row, TimeSeriesTable};
use super::{INDOOR_CHANNELS, LABEL_CHANNEL, WEATHER_CHANNELS};
use crate::error::{Error, Result};

/// Which CSV layout a file follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    Indoor,
    Weather,
}

impl TableKind {
    pub fn expected_header(self) -> String {
        match self {
            TableKind::Indoor => {
                let mut cols = vec!["timestamp", "office_id"];
                cols.extend(INDOOR_CHANNELS);
                cols.push(LABEL_CHANNEL);
                cols.join(",")
            }
            TableKind::Weather => {
                let mut cols = vec!["timestamp"];
                cols.extend(WEATHER_CHANNELS);
                cols.join(",")
            }
        }
    }

    fn channels(self) -> &'static [&'static str] {
        match self {
            TableKind::Indoor => &INDOOR_CHANNELS,
            TableKind::Weather => &WEATHER_CHANNELS,
        }
    }
}

enum Slot {
    Timestamp,
    Office,
    Channel(usize),
    Window,
    WindowPart,
}

/// Reads an indoor or weather CSV file.
///
/// Channel columns may be a subset of the declared layout (absent channels
/// are later filled by imputation); unknown columns are rejected. Indoor
/// files carry either a collapsed `window_state` column or two columns
/// `window_1,window_2` that are OR-ed together.
pub fn ingest_csv(path: &Path, kind: TableKind) -> Result<TimeSeriesTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, kind)
}

pub fn read_csv<R: Read>(reader: R, kind: TableKind) -> Result<TimeSeriesTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| csv_error(e, 1))?
        .iter()
        .map(str::to_string)
        .collect::<Vec<_>>();
    let expected = kind.expected_header();

    let mut slots = Vec::with_capacity(headers.len());
    let mut columns: Vec<String> = Vec::new();
    for h in &headers {
        let slot = match (kind, h.as_str()) {
            (_, "timestamp") => Slot::Timestamp,
            (TableKind::Indoor, "office_id") => Slot::Office,
            (TableKind::Indoor, "window_state") => Slot::Window,
            (TableKind::Indoor, "window_1" | "window_2") => Slot::WindowPart,
            (_, name) if kind.channels().contains(&name) => {
                if columns.iter().any(|c| c == name) {
                    return Err(Error::Parse {
                        line: 1,
                        message: format!("duplicate column `{name}`"),
                    });
                }
                columns.push(name.to_string());
                Slot::Channel(columns.len() - 1)
            }
            (_, name) => {
                return Err(Error::UnknownColumn {
                    column: name.to_string(),
                    expected,
                })
            }
        };
        slots.push(slot);
    }
    let has = |name: &str| headers.iter().any(|h| h == name);
    let missing = |column: &str| Error::MissingColumn {
        column: column.to_string(),
        expected: expected.clone(),
    };
    if !has("timestamp") {
        return Err(missing("timestamp"));
    }
    if kind == TableKind::Indoor {
        if !has("office_id") {
            return Err(missing("office_id"));
        }
        let parts = has("window_1") as u8 + has("window_2") as u8;
        if has("window_state") && parts > 0 {
            return Err(Error::Parse {
                line: 1,
                message: "use either window_state or window_1,window_2".into(),
            });
        }
        if !has("window_state") && parts != 2 {
            return Err(missing("window_state"));
        }
    }
    let presence_col = columns.iter().position(|c| c == "presence");
    let direction_col = columns.iter().position(|c| c == "wind_direction");

    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(e, 0))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let mut row = Row {
            timestamp: 0,
            office_id: String::new(),
            values: vec![None; columns.len()],
            window_state: None,
        };
        let mut parts: Vec<Option<bool>> = Vec::new();
        for (field, slot) in record.iter().zip(&slots) {
            match slot {
                Slot::Timestamp => row.timestamp = parse_timestamp(field, line)?,
                Slot::Office => {
                    if field.is_empty() {
                        return Err(Error::Parse {
                            line,
                            message: "empty office_id".into(),
                        });
                    }
                    row.office_id = field.to_string();
                }
                Slot::Channel(i) => row.values[*i] = parse_value(field, line)?,
                Slot::Window => row.window_state = parse_binary(field, line, "window_state")?,
                Slot::WindowPart => parts.push(parse_binary(field, line, "window")?),
            }
        }
        if !parts.is_empty() {
            // Open if either window is open; missing only if nothing says open
            // and some part is unknown.
            row.window_state = if parts.iter().any(|p| *p == Some(true)) {
                Some(true)
            } else if parts.iter().all(Option::is_some) {
                Some(false)
            } else {
                None
            };
        }
        if let Some(i) = presence_col {
            if let Some(v) = row.values[i] {
                if v != 0.0 && v != 1.0 {
                    return Err(Error::Parse {
                        line,
                        message: format!("presence must be 0 or 1, got {v}"),
                    });
                }
            }
        }
        if let Some(i) = direction_col {
            if let Some(v) = row.values[i].as_mut() {
                *v = v.rem_euclid(360.0);
            }
        }
        rows.push(row);
    }
    Ok(TimeSeriesTable::new(columns, rows))
}

/// Writes a table in the CSV layout of `kind`, canonical column order.
pub fn write_csv(table: &TimeSeriesTable, path: &Path, kind: TableKind) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv_to(table, std::io::BufWriter::new(file), kind).map_err(|e| Error::io(path, e))
}

pub fn write_csv_to<W: Write>(table: &TimeSeriesTable, writer: W, kind: TableKind) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let channels: Vec<(&str, usize)> = kind
        .channels()
        .iter()
        .filter_map(|c| table.column_index(c).map(|i| (*c, i)))
        .collect();
    let mut header = vec!["timestamp".to_string()];
    if kind == TableKind::Indoor {
        header.push("office_id".into());
    }
    header.extend(channels.iter().map(|(c, _)| c.to_string()));
    if kind == TableKind::Indoor {
        header.push(LABEL_CHANNEL.into());
    }
    w.write_record(&header)?;
    for r in table.rows() {
        let mut rec = vec![r.timestamp.to_string()];
        if kind == TableKind::Indoor {
            rec.push(r.office_id.clone());
        }
        for (_, i) in &channels {
            rec.push(r.values[*i].map(|v| v.to_string()).unwrap_or_default());
        }
        if kind == TableKind::Indoor {
            rec.push(match r.window_state {
                Some(true) => "1".into(),
                Some(false) => "0".into(),
                None => String::new(),
            });
        }
        w.write_record(&rec)?;
    }
    w.flush()
}

fn csv_error(e: csv::Error, fallback_line: u64) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(fallback_line);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

fn is_missing(field: &str) -> bool {
    field.is_empty() || field.eq_ignore_ascii_case("nan") || field.eq_ignore_ascii_case("na")
}

fn parse_value(field: &str, line: u64) -> Result<Option<f64>> {
    if is_missing(field) {
        return Ok(None);
    }
    let v: f64 = field.parse().map_err(|_| Error::Parse {
        line,
        message: format!("not a number: `{field}`"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("non-finite value `{field}`"),
        });
    }
    Ok(Some(v))
}

fn parse_binary(field: &str, line: u64, what: &str) -> Result<Option<bool>> {
    match parse_value(field, line)? {
        None => Ok(None),
        Some(v) if v == 0.0 => Ok(Some(false)),
        Some(v) if v == 1.0 => Ok(Some(true)),
        Some(v) => Err(Error::Parse {
            line,
            message: format!("{what} must be 0 or 1, got {v}"),
        }),
    }
}

fn parse_timestamp(field: &str, line: u64) -> Result<i64> {
    if let Ok(t) = field.parse::<i64>() {
        return Ok(t);
    }
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() && v.fract() == 0.0 => Ok(v as i64),
        _ => Err(Error::Parse {
            line,
            message: format!("invalid timestamp `{field}`"),
        }),
    }
}
