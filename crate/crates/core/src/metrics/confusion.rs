use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }
}

/// Classification rates; a rate whose denominator is zero is `None`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Rates {
    pub acc: Option<f64>,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    pub f1: Option<f64>,
}

pub fn confusion(predicted: &[bool], actual: &[bool]) -> Result<ConfusionMatrix> {
    if predicted.len() != actual.len() {
        return Err(Error::Dimension(format!(
            "{} predictions vs {} labels",
            predicted.len(),
            actual.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &a) in predicted.iter().zip(actual) {
        cm.add(p, a);
    }
    Ok(cm)
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn rates(cm: &ConfusionMatrix) -> Rates {
    Rates {
        acc: ratio(cm.tp + cm.tn, cm.total()),
        tpr: ratio(cm.tp, cm.tp + cm.fn_),
        tnr: ratio(cm.tn, cm.tn + cm.fp),
        fpr: ratio(cm.fp, cm.tn + cm.fp),
        fnr: ratio(cm.fn_, cm.tp + cm.fn_),
        // 2TP / (2TP + FP + FN)
        f1: ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn_),
    }
}
