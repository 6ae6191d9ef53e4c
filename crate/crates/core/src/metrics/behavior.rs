use serde::Serialize;

use crate::error::{Error, Result};
use crate::util;

/// Which transitions count as actions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ActionCount {
    /// 0 -> 1 only.
    #[default]
    Opening,
    /// Both 0 -> 1 and 1 -> 0.
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BehaviorSummary {
    pub fraction_open: f64,
    pub actions_per_day: f64,
    pub actions: u64,
    pub monitored_days: f64,
}

fn check(states: &[bool], timestamps: &[i64], cadence_s: i64) -> Result<()> {
    if states.is_empty() {
        return Err(Error::Invalid("empty state series".into()));
    }
    if states.len() != timestamps.len() {
        return Err(Error::Dimension(format!(
            "{} states vs {} timestamps",
            states.len(),
            timestamps.len()
        )));
    }
    if cadence_s <= 0 {
        return Err(Error::Config("cadence must be positive".into()));
    }
    if timestamps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Invalid("timestamps must be strictly increasing".into()));
    }
    Ok(())
}

/// Fraction of open points and actions per monitored day, where the
/// monitored duration is `points x cadence`. Transitions across gaps are not
/// actions.
pub fn behavior_summary(
    states: &[bool],
    timestamps: &[i64],
    cadence_s: i64,
    mode: ActionCount,
) -> Result<BehaviorSummary> {
    check(states, timestamps, cadence_s)?;
    let seg = util::segment_ids(timestamps, cadence_s);
    let actions = (1..states.len())
        .filter(|&i| seg[i] == seg[i - 1] && states[i] != states[i - 1])
        .filter(|&i| mode == ActionCount::Both || states[i])
        .count() as u64;
    let days = states.len() as f64 * cadence_s as f64 / util::SECONDS_PER_DAY as f64;
    let open = states.iter().filter(|&&s| s).count();
    Ok(BehaviorSummary {
        fraction_open: open as f64 / states.len() as f64,
        actions_per_day: actions as f64 / days,
        actions,
        monitored_days: days,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SequenceKind {
    Open,
    Closed,
}

/// One complete open or closed period, bounded by two transitions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sequence {
    pub kind: SequenceKind,
    pub start: i64,
    pub hours: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quartiles {
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub iqr: f64,
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        let s = util::sorted(values);
        let q25 = util::quantile_sorted(&s, 0.25)?;
        let median = util::quantile_sorted(&s, 0.5)?;
        let q75 = util::quantile_sorted(&s, 0.75)?;
        Some(Self {
            q25,
            median,
            q75,
            iqr: q75 - q25,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DurationStats {
    pub open: Option<Quartiles>,
    pub closed: Option<Quartiles>,
    pub open_count: usize,
    pub closed_count: usize,
    pub sequences: Vec<Sequence>,
}

/// Durations of complete open and closed sequences in hours. A sequence
/// runs from one state change to the next inside a gap-free segment;
/// sequences touching a stream boundary or a gap are discarded.
pub fn duration_stats(states: &[bool], timestamps: &[i64], cadence_s: i64) -> Result<DurationStats> {
    check(states, timestamps, cadence_s)?;
    let seg = util::segment_ids(timestamps, cadence_s);
    let mut sequences = Vec::new();
    let mut last_change: Option<usize> = None;
    for i in 1..states.len() {
        if seg[i] != seg[i - 1] {
            last_change = None;
            continue;
        }
        if states[i] != states[i - 1] {
            if let Some(k) = last_change {
                sequences.push(Sequence {
                    kind: if states[k] { SequenceKind::Open } else { SequenceKind::Closed },
                    start: timestamps[k],
                    hours: (timestamps[i] - timestamps[k]) as f64 / 3600.0,
                });
            }
            last_change = Some(i);
        }
    }
    let hours = |kind| {
        sequences
            .iter()
            .filter(|s| s.kind == kind)
            .map(|s| s.hours)
            .collect::<Vec<_>>()
    };
    let open = hours(SequenceKind::Open);
    let closed = hours(SequenceKind::Closed);
    Ok(DurationStats {
        open: Quartiles::of(&open),
        closed: Quartiles::of(&closed),
        open_count: open.len(),
        closed_count: closed.len(),
        sequences,
    })
}
