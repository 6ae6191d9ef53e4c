use super::table::{Row, TimeSeriesTable};
use super::BINARY_CHANNELS;
use crate::error::{Error, Result};
use crate::util;

/// How each channel is carried onto the target grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ResamplePlan {
    pub source_cadence_min: u32,
    pub target_cadence_min: u32,
    /// Channels linearly interpolated.
    pub interpolate: Vec<String>,
}

impl ResamplePlan {
    /// Interpolates every non-binary column; binary channels and the window
    /// label take the nearest source record.
    pub fn for_table(table: &TimeSeriesTable, source_cadence_min: u32, target_cadence_min: u32) -> Self {
        Self {
            source_cadence_min,
            target_cadence_min,
            interpolate: table
                .columns()
                .iter()
                .filter(|c| !BINARY_CHANNELS.contains(&c.as_str()))
                .cloned()
                .collect(),
        }
    }
}

/// Resamples each office stream onto a grid aligned to multiples of the
/// target cadence. Grid points are only produced inside gap-free segments
/// (a gap is a delta above twice the source cadence).
pub fn resample_linear(table: &TimeSeriesTable, plan: &ResamplePlan) -> Result<TimeSeriesTable> {
    if plan.source_cadence_min == 0 || plan.target_cadence_min == 0 {
        return Err(Error::Config("cadences must be positive".into()));
    }
    let mut interp = vec![false; table.columns().len()];
    for name in &plan.interpolate {
        if BINARY_CHANNELS.contains(&name.as_str()) {
            return Err(Error::Invalid(format!(
                "channel `{name}` is binary and cannot be interpolated"
            )));
        }
        let i = table
            .column_index(name)
            .ok_or_else(|| Error::Invalid(format!("unknown channel `{name}`")))?;
        interp[i] = true;
    }
    let source_s = i64::from(plan.source_cadence_min) * 60;
    let target_s = i64::from(plan.target_cadence_min) * 60;

    let mut rows = Vec::new();
    for (_, range) in table.office_ranges() {
        let office = &table.rows()[range];
        let ts: Vec<i64> = office.iter().map(|r| r.timestamp).collect();
        let seg = util::segment_ids(&ts, source_s);
        let mut start = 0;
        while start < office.len() {
            let mut end = start;
            while end + 1 < office.len() && seg[end + 1] == seg[start] {
                end += 1;
            }
            let first = ts[start];
            let last = ts[end];
            let mut g = first.div_euclid(target_s) * target_s;
            if g < first {
                g += target_s;
            }
            let mut k = start;
            while g <= last {
                while k < end && ts[k + 1] <= g {
                    k += 1;
                }
                rows.push(grid_row(&office[k], office.get(k + 1).filter(|_| k < end), g, &interp));
                g += target_s;
            }
            start = end + 1;
        }
    }
    let mut out = TimeSeriesTable::new(table.columns().to_vec(), rows).with_cadence(target_s);
    out.utc_offset_minutes = table.utc_offset_minutes;
    out.imputed = table.imputed.clone();
    Ok(out)
}

/// Value at grid time `g` with `lo.timestamp <= g` and, if present,
/// `g < hi.timestamp`.
fn grid_row(lo: &Row, hi: Option<&Row>, g: i64, interp: &[bool]) -> Row {
    let Some(hi) = hi.filter(|h| h.timestamp > g && lo.timestamp < g) else {
        return Row {
            timestamp: g,
            ..lo.clone()
        };
    };
    let w = (g - lo.timestamp) as f64 / (hi.timestamp - lo.timestamp) as f64;
    // Nearest source record; equidistant goes to the later one.
    let nearest = if hi.timestamp - g <= g - lo.timestamp { hi } else { lo };
    let values = interp
        .iter()
        .enumerate()
        .map(|(i, &linear)| {
            if linear {
                match (lo.values[i], hi.values[i]) {
                    (Some(a), Some(b)) => Some(a + w * (b - a)),
                    _ => None,
                }
            } else {
                nearest.values[i]
            }
        })
        .collect();
    Row {
        timestamp: g,
        office_id: lo.office_id.clone(),
        values,
        window_state: nearest.window_state,
    }
}
