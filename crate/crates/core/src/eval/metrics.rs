use serde::{Deserialize, Serialize};

use super::roc_auc;
use crate::error::{Error, Result};

/// Binary confusion counts with malignant as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        Self { tp, fp, tn, fn_ }
    }

    /// Tallies predicted vs true class indices (1 = malignant).
    pub fn from_predictions(predicted: &[usize], actual: &[usize]) -> Result<Self> {
        if predicted.len() != actual.len() {
            return Err(Error::invalid(format!(
                "{} predictions for {} labels",
                predicted.len(),
                actual.len()
            )));
        }
        let mut cm = Self::default();
        for (&p, &a) in predicted.iter().zip(actual) {
            match (p, a) {
                (1, 1) => cm.tp += 1,
                (1, 0) => cm.fp += 1,
                (0, 0) => cm.tn += 1,
                (0, 1) => cm.fn_ += 1,
                _ => return Err(Error::invalid(format!("class pair ({p}, {a}) is not binary"))),
            }
        }
        Ok(cm)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn merge(&self, other: &Self) -> Self {
        Self::new(
            self.tp + other.tp,
            self.fp + other.fp,
            self.tn + other.tn,
            self.fn_ + other.fn_,
        )
    }
}

/// Percentages, except `auc` in `[0, 1]` and `mse_loss`. `None` marks a
/// metric whose denominator is zero (or that was not computed).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub acc: Option<f64>,
    pub sen: Option<f64>,
    pub spe: Option<f64>,
    pub precision: Option<f64>,
    pub fpr: Option<f64>,
    pub f1: Option<f64>,
    pub auc: Option<f64>,
    pub mse_loss: Option<f64>,
}

impl MetricReport {
    pub const FIELDS: usize = 8;
    pub const NAMES: [&'static str; Self::FIELDS] =
        ["acc", "sen", "spe", "precision", "fpr", "f1", "auc", "mse_loss"];

    /// Values in [`Self::NAMES`] order.
    pub fn values(&self) -> [Option<f64>; Self::FIELDS] {
        [self.acc, self.sen, self.spe, self.precision, self.fpr, self.f1, self.auc, self.mse_loss]
    }

    pub fn from_values(v: [Option<f64>; Self::FIELDS]) -> Self {
        let [acc, sen, spe, precision, fpr, f1, auc, mse_loss] = v;
        Self { acc, sen, spe, precision, fpr, f1, auc, mse_loss }
    }
}

fn pct(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64 * 100.0)
}

/// All count-based metrics; `auc` and `mse_loss` are left undefined.
pub fn compute_metrics(cm: &ConfusionMatrix) -> MetricReport {
    let precision = pct(cm.tp, cm.tp + cm.fp);
    let sen = pct(cm.tp, cm.tp + cm.fn_);
    let f1 = match (precision, sen) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    MetricReport {
        acc: pct(cm.tp + cm.tn, cm.total()),
        sen,
        spe: pct(cm.tn, cm.tn + cm.fp),
        precision,
        fpr: pct(cm.fp, cm.fp + cm.tn),
        f1,
        auc: None,
        mse_loss: None,
    }
}

/// Squared error between the positive-class probability and the 0/1 label.
pub fn mse_loss(scores: &[f64], labels: &[usize]) -> Option<f64> {
    if scores.is_empty() || scores.len() != labels.len() {
        return None;
    }
    Some(
        scores
            .iter()
            .zip(labels)
            .map(|(s, &y)| (y as f64 - s).powi(2))
            .sum::<f64>()
            / scores.len() as f64,
    )
}

/// Confusion matrix (argmax at 0.5) and full report from positive-class
/// probabilities. AUC is undefined when only one class is present.
pub fn evaluate_scores(scores: &[f64], labels: &[usize]) -> Result<(ConfusionMatrix, MetricReport)> {
    let predicted: Vec<usize> = scores.iter().map(|&s| usize::from(s > 0.5)).collect();
    let cm = ConfusionMatrix::from_predictions(&predicted, labels)?;
    let mut report = compute_metrics(&cm);
    report.auc = roc_auc(scores, labels).ok().map(|r| r.auc);
    report.mse_loss = mse_loss(scores, labels);
    Ok((cm, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_confusion_counts() {
        let r = compute_metrics(&ConfusionMatrix::new(809, 20, 799, 10));
        assert_eq!(format!("{:.2}", r.acc.unwrap()), "98.17");
        assert_eq!(format!("{:.2}", r.sen.unwrap()), "98.78");
        assert!((r.acc.unwrap() - 1608.0 / 1638.0 * 100.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_classifier() {
        let r = compute_metrics(&ConfusionMatrix::new(100, 0, 100, 0));
        for v in [r.acc, r.sen, r.spe, r.f1, r.precision] {
            assert_eq!(v, Some(100.0));
        }
        assert_eq!(r.fpr, Some(0.0));
    }

    #[test]
    fn undefined_metrics_are_marked() {
        // no positives predicted or present
        let r = compute_metrics(&ConfusionMatrix::new(0, 0, 5, 0));
        assert_eq!(r.acc, Some(100.0));
        assert_eq!(r.sen, None);
        assert_eq!(r.precision, None);
        assert_eq!(r.f1, None);
        assert_eq!(r.spe, Some(100.0));
        assert_eq!(compute_metrics(&ConfusionMatrix::default()).acc, None);
    }

    #[test]
    fn identities_hold() {
        for (tp, fp, tn, fn_) in [(5, 3, 9, 2), (40, 1, 33, 7), (1, 1, 1, 1)] {
            let cm = ConfusionMatrix::new(tp, fp, tn, fn_);
            let r = compute_metrics(&cm);
            let fnr = fn_ as f64 / (tp + fn_) as f64 * 100.0;
            assert!((r.sen.unwrap() + fnr - 100.0).abs() < 1e-10);
            assert!((r.fpr.unwrap() + r.spe.unwrap() - 100.0).abs() < 1e-10);
            let (p, s) = (r.precision.unwrap(), r.sen.unwrap());
            assert!((r.f1.unwrap() - 2.0 / (1.0 / p + 1.0 / s)).abs() < 1e-10);
        }
    }

    #[test]
    fn tally_conserves_classes() {
        let pred = [1, 0, 1, 1, 0, 0];
        let act = [1, 1, 0, 1, 0, 0];
        let cm = ConfusionMatrix::from_predictions(&pred, &act).unwrap();
        assert_eq!(cm.tp + cm.fn_, 3);
        assert_eq!(cm.tn + cm.fp, 3);
        assert!(ConfusionMatrix::from_predictions(&[2], &[0]).is_err());
        assert!(ConfusionMatrix::from_predictions(&[1], &[]).is_err());
    }
}
