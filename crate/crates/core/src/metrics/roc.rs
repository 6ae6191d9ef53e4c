use serde::Serialize;

use crate::error::{Error, Result};

/// ROC curve as `(FPR, TPR)` points plus the trapezoidal AUC.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Roc {
    pub points: Vec<(f64, f64)>,
    /// `None` when the truth contains a single class.
    pub auc: Option<f64>,
}

/// Sweeps the decision threshold over every distinct probability (predicting
/// open when `p >= threshold`), from `+inf` down to `-inf`.
pub fn roc(probabilities: &[f64], actual: &[bool]) -> Result<Roc> {
    if probabilities.len() != actual.len() {
        return Err(Error::Dimension(format!(
            "{} probabilities vs {} labels",
            probabilities.len(),
            actual.len()
        )));
    }
    if let Some(p) = probabilities.iter().find(|p| !p.is_finite()) {
        return Err(Error::NonFinite(format!("probability {p}")));
    }
    let mut order: Vec<usize> = (0..probabilities.len()).collect();
    order.sort_by(|&a, &b| probabilities[b].total_cmp(&probabilities[a]));
    let pos = actual.iter().filter(|&&a| a).count() as u64;
    let neg = actual.len() as u64 - pos;
    let rate = |n: u64, d: u64| if d == 0 { 0.0 } else { n as f64 / d as f64 };

    let mut counts = vec![(0u64, 0u64)];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let p = probabilities[order[i]];
        while i < order.len() && probabilities[order[i]] == p {
            if actual[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        counts.push((fp, tp));
    }
    // -inf sentinel: everything predicted open.
    counts.push((neg, pos));
    counts.dedup();

    let auc = (pos > 0 && neg > 0).then(|| {
        let twice_area: u64 = counts
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1))
            .sum();
        twice_area as f64 / (2 * pos * neg) as f64
    });
    let mut points: Vec<(f64, f64)> = counts
        .iter()
        .map(|&(f, t)| (rate(f, neg), rate(t, pos)))
        .collect();
    points.dedup();
    Ok(Roc { points, auc })
}

/// Tie-corrected Mann-Whitney estimate of the AUC via average ranks.
pub fn mann_whitney_auc(probabilities: &[f64], actual: &[bool]) -> Option<f64> {
    let n = probabilities.len();
    let pos = actual.iter().filter(|&&a| a).count();
    let neg = n - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| probabilities[a].total_cmp(&probabilities[b]));
    // Twice the rank sum keeps tie averages integral.
    let mut twice_rank_sum: u64 = 0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && probabilities[order[j + 1]] == probabilities[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 averaged: (i + j + 2) / 2.
        let twice_avg = (i + j + 2) as u64;
        for &k in &order[i..=j] {
            if actual[k] {
                twice_rank_sum += twice_avg;
            }
        }
        i = j + 1;
    }
    let pos = pos as u64;
    let twice_u = twice_rank_sum - pos * (pos + 1);
    Some(twice_u as f64 / (2 * pos * neg as u64) as f64)
}
