use super::table::{Row, TimeSeriesTable};
use crate::error::{Error, Result};

/// Largest accepted distance between an indoor record and its weather stamp.
pub const MAX_JOIN_OFFSET_S: i64 = 300;

#[derive(Debug, Clone)]
pub struct JoinOutcome {
    pub table: TimeSeriesTable,
    /// Indoor records without a weather stamp within five minutes.
    pub dropped: usize,
}

/// Index of the weather stamp assigned to `t`: the nearest one within five
/// minutes, ties at exactly five minutes going to the later stamp.
pub(crate) fn nearest_weather(weather_ts: &[i64], t: i64) -> Option<usize> {
    let next = weather_ts.partition_point(|&w| w < t);
    let next_d = weather_ts.get(next).map(|&w| w - t);
    let prev_d = next.checked_sub(1).map(|p| t - weather_ts[p]);
    match (prev_d, next_d) {
        (Some(p), Some(n)) if n <= p => (n <= MAX_JOIN_OFFSET_S).then_some(next),
        (Some(p), _) => (p <= MAX_JOIN_OFFSET_S).then_some(next - 1),
        (None, Some(n)) => (n <= MAX_JOIN_OFFSET_S).then_some(next),
        (None, None) => None,
    }
}

/// Attaches to every indoor record the channels of its nearest weather record.
pub fn join_weather(indoor: &TimeSeriesTable, weather: &TimeSeriesTable) -> Result<JoinOutcome> {
    let (Some((is, ie)), Some((ws, we))) = (indoor.time_range(), weather.time_range()) else {
        return Err(Error::Invalid("join requires non-empty indoor and weather tables".into()));
    };
    let overlap = is.max(ws - MAX_JOIN_OFFSET_S) <= ie.min(we + MAX_JOIN_OFFSET_S);
    if !overlap {
        return Err(Error::NoOverlap {
            indoor_start: is,
            indoor_end: ie,
            weather_start: ws,
            weather_end: we,
        });
    }
    let weather_ts: Vec<i64> = weather.rows().iter().map(|r| r.timestamp).collect();

    let mut columns = indoor.columns().to_vec();
    let mut weather_cols = Vec::new();
    for (i, c) in weather.columns().iter().enumerate() {
        if !columns.contains(c) {
            columns.push(c.clone());
            weather_cols.push(i);
        }
    }

    let mut rows = Vec::with_capacity(indoor.len());
    let mut dropped = 0;
    for r in indoor.rows() {
        match nearest_weather(&weather_ts, r.timestamp) {
            Some(wi) => {
                let w = &weather.rows()[wi];
                let mut values = r.values.clone();
                values.extend(weather_cols.iter().map(|&i| w.values[i]));
                rows.push(Row {
                    values,
                    ..r.clone()
                });
            }
            None => dropped += 1,
        }
    }
    if rows.is_empty() {
        return Err(Error::NoOverlap {
            indoor_start: is,
            indoor_end: ie,
            weather_start: ws,
            weather_end: we,
        });
    }
    let mut table = TimeSeriesTable::new(columns, rows);
    table.cadence_s = indoor.cadence_s;
    table.utc_offset_minutes = indoor.utc_offset_minutes;
    table.imputed = indoor.imputed.union(&weather.imputed).cloned().collect();
    Ok(JoinOutcome { table, dropped })
}
