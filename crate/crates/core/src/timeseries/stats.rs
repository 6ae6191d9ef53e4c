use super::table::TimeSeriesTable;
use crate::error::{Error, Result};
use crate::metrics::{behavior_summary, ActionCount};
use crate::segmentation::OfficeProfile;

pub const DEFAULT_COLD_THRESHOLD_C: f64 = 12.0;

/// Behavioral summary of one office: mean indoor temperature on cold and
/// warm points (outdoor below / at or above the threshold), mean CO2, open
/// fraction over labeled points and opening actions per day.
///
/// The outdoor temperature is the weather station's `avg_temp` when joined,
/// otherwise the facade sensor.
pub fn office_stats(table: &TimeSeriesTable, office_id: &str, cold_threshold_c: f64) -> Result<OfficeProfile> {
    let rows = table.office_rows(office_id);
    if rows.is_empty() {
        return Err(Error::Invalid(format!("office `{office_id}` has no records")));
    }
    let outdoor = table
        .column_index("avg_temp")
        .or_else(|| table.column_index("facade_outdoor_temp"));
    let indoor = table.column_index("indoor_temp");
    let co2 = table.column_index("co2");

    let (mut cold_sum, mut cold_n, mut warm_sum, mut warm_n) = (0.0, 0usize, 0.0, 0usize);
    let (mut co2_sum, mut co2_n) = (0.0, 0usize);
    let mut states = Vec::new();
    let mut stamps = Vec::new();
    for r in rows {
        if let (Some(o), Some(i)) = (outdoor, indoor) {
            if let (Some(tout), Some(tin)) = (r.values[o], r.values[i]) {
                if tout < cold_threshold_c {
                    cold_sum += tin;
                    cold_n += 1;
                } else {
                    warm_sum += tin;
                    warm_n += 1;
                }
            }
        }
        if let Some(v) = co2.and_then(|c| r.values[c]) {
            co2_sum += v;
            co2_n += 1;
        }
        if let Some(w) = r.window_state {
            states.push(w);
            stamps.push(r.timestamp);
        }
    }
    if states.is_empty() {
        return Err(Error::Invalid(format!("office `{office_id}` has no labeled records")));
    }
    let behavior = behavior_summary(&states, &stamps, table.cadence(), ActionCount::Opening)?;
    let mean = |s: f64, n: usize| (n > 0).then(|| s / n as f64);
    Ok(OfficeProfile {
        office_id: office_id.to_string(),
        mean_temp_cold: mean(cold_sum, cold_n),
        mean_temp_warm: mean(warm_sum, warm_n),
        mean_co2: mean(co2_sum, co2_n),
        fraction_open: behavior.fraction_open,
        actions_per_day: behavior.actions_per_day,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::Row;

    fn table(points: &[(f64, f64, Option<bool>)]) -> TimeSeriesTable {
        TimeSeriesTable::new(
            vec!["indoor_temp".into(), "avg_temp".into(), "co2".into()],
            points
                .iter()
                .enumerate()
                .map(|(k, &(tin, tout, w))| Row {
                    timestamp: k as i64 * 600,
                    office_id: "o".into(),
                    values: vec![Some(tin), Some(tout), Some(500.0)],
                    window_state: w,
                })
                .collect(),
        )
        .with_cadence(600)
    }

    #[test]
    fn constant_cold_stream() {
        let t = table(&[(21.0, 5.0, Some(false)); 6]);
        let p = office_stats(&t, "o", 12.0).unwrap();
        assert_eq!(p.mean_temp_cold, Some(21.0));
        assert_eq!(p.mean_temp_warm, None);
        assert_eq!(p.fraction_open, 0.0);
        assert_eq!(p.actions_per_day, 0.0);
        assert_eq!(p.mean_co2, Some(500.0));
    }

    #[test]
    fn fraction_open_counts_labels() {
        let t = table(&[
            (21.0, 5.0, Some(false)),
            (21.0, 5.0, Some(false)),
            (21.0, 5.0, Some(true)),
            (21.0, 5.0, Some(true)),
            (21.0, 5.0, None),
        ]);
        assert_eq!(office_stats(&t, "o", 12.0).unwrap().fraction_open, 0.5);
    }

    #[test]
    fn alternating_outdoor_partition() {
        let pts: Vec<_> = (0..8)
            .map(|k| if k % 2 == 0 { (20.0, 10.0, Some(false)) } else { (24.0, 14.0, Some(false)) })
            .collect();
        let p = office_stats(&table(&pts), "o", 12.0).unwrap();
        assert_eq!(p.mean_temp_cold, Some(20.0));
        assert_eq!(p.mean_temp_warm, Some(24.0));
    }

    #[test]
    fn unknown_office_is_an_error() {
        let t = table(&[(21.0, 5.0, Some(false))]);
        assert!(office_stats(&t, "nope", 12.0).is_err());
    }
}
