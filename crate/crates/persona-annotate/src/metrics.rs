//! Binary classification agreement metrics with the toxic class as positive.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datasets::BinaryLabel;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub true_positive: u64,
    pub false_positive: u64,
    pub false_negative: u64,
    pub true_negative: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.true_positive + self.false_positive + self.false_negative + self.true_negative
    }
}

/// Precision / recall / F1 for one class, plus its gold support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Per-class and aggregate scores derived from a confusion matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub toxic: ClassScores,
    pub not_toxic: ClassScores,
    pub accuracy: f64,
    pub macro_avg_f1: f64,
    pub weighted_avg_f1: f64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("prediction and gold lengths differ: {pred} vs {gold}")]
    LengthMismatch { pred: usize, gold: usize },
    #[error("cannot score an empty label list")]
    Empty,
}

/// Tally a confusion matrix with toxic as the positive class.
pub fn confusion(
    pred: &[BinaryLabel],
    gold: &[BinaryLabel],
) -> Result<ConfusionMatrix, MetricsError> {
    if pred.len() != gold.len() {
        return Err(MetricsError::LengthMismatch {
            pred: pred.len(),
            gold: gold.len(),
        });
    }
    if pred.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &g) in pred.iter().zip(gold) {
        match (p, g) {
            (BinaryLabel::Toxic, BinaryLabel::Toxic) => cm.true_positive += 1,
            (BinaryLabel::Toxic, BinaryLabel::NotToxic) => cm.false_positive += 1,
            (BinaryLabel::NotToxic, BinaryLabel::Toxic) => cm.false_negative += 1,
            (BinaryLabel::NotToxic, BinaryLabel::NotToxic) => cm.true_negative += 1,
        }
    }
    Ok(cm)
}

/// 0/0 ratios collapse to 0 so degenerate runs (an annotator answering TRUE
/// everywhere, for instance) still produce a usable report.
fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Derive the full report from a confusion matrix.
pub fn report(cm: &ConfusionMatrix) -> Result<ClassificationReport, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::Empty);
    }
    let toxic_precision = ratio(cm.true_positive, cm.true_positive + cm.false_positive);
    let toxic_recall = ratio(cm.true_positive, cm.true_positive + cm.false_negative);
    let toxic = ClassScores {
        precision: toxic_precision,
        recall: toxic_recall,
        f1: f1(toxic_precision, toxic_recall),
        support: cm.true_positive + cm.false_negative,
    };
    // For the negative class the roles of the cells swap.
    let nt_precision = ratio(cm.true_negative, cm.true_negative + cm.false_negative);
    let nt_recall = ratio(cm.true_negative, cm.true_negative + cm.false_positive);
    let not_toxic = ClassScores {
        precision: nt_precision,
        recall: nt_recall,
        f1: f1(nt_precision, nt_recall),
        support: cm.true_negative + cm.false_positive,
    };
    let accuracy = (cm.true_positive + cm.true_negative) as f64 / total as f64;
    let macro_avg_f1 = (toxic.f1 + not_toxic.f1) / 2.0;
    let weighted_avg_f1 =
        (toxic.f1 * toxic.support as f64 + not_toxic.f1 * not_toxic.support as f64) / total as f64;
    Ok(ClassificationReport {
        toxic,
        not_toxic,
        accuracy,
        macro_avg_f1,
        weighted_avg_f1,
    })
}

/// Convenience: confusion + report in one step.
pub fn score(
    pred: &[BinaryLabel],
    gold: &[BinaryLabel],
) -> Result<ClassificationReport, MetricsError> {
    report(&confusion(pred, gold)?)
}
