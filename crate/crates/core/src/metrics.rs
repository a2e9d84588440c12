//! Multi-class evaluation: confusion matrix, per-class precision/recall/F1,
//! support-weighted averages and accuracy.
//!
//! Undefined ratios (0/0) are reported as 0 so that weighted averages stay
//! defined when a class is never predicted or never present.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("predictions ({preds}) and labels ({labels}) differ in length")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("class id {class} is out of range for {n_classes} classes")]
    ClassOutOfRange { class: usize, n_classes: usize },
    #[error("no samples were evaluated")]
    Empty,
}

/// `counts[t][p]` is the number of samples of true class `t` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self {
            n_classes,
            counts: vec![vec![0; n_classes]; n_classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self, MetricsError> {
        let n_classes = counts.len();
        if let Some(row) = counts.iter().find(|r| r.len() != n_classes) {
            return Err(MetricsError::ClassOutOfRange {
                class: row.len(),
                n_classes,
            });
        }
        Ok(Self { n_classes, counts })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes).map(|c| self.counts[c][c]).sum()
    }

    pub fn true_positives(&self, c: usize) -> u64 {
        self.counts[c][c]
    }

    pub fn false_positives(&self, c: usize) -> u64 {
        self.counts.iter().map(|row| row[c]).sum::<u64>() - self.counts[c][c]
    }

    pub fn false_negatives(&self, c: usize) -> u64 {
        self.counts[c].iter().sum::<u64>() - self.counts[c][c]
    }

    pub fn true_negatives(&self, c: usize) -> u64 {
        self.total() - self.true_positives(c) - self.false_positives(c) - self.false_negatives(c)
    }

    /// Adds another matrix of the same size.
    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.n_classes, other.n_classes, "confusion sizes differ");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

pub fn confusion(preds: &[usize], labels: &[usize], n_classes: usize) -> Result<ConfusionMatrix, MetricsError> {
    if preds.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            preds: preds.len(),
            labels: labels.len(),
        });
    }
    let mut cm = ConfusionMatrix::new(n_classes);
    for (&p, &t) in preds.iter().zip(labels) {
        for class in [p, t] {
            if class >= n_classes {
                return Err(MetricsError::ClassOutOfRange { class, n_classes });
            }
        }
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weighted {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    let s = precision + recall;
    if s == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / s
    }
}

pub fn per_class(cm: &ConfusionMatrix) -> Vec<ClassMetrics> {
    (0..cm.n_classes)
        .map(|c| {
            let tp = cm.true_positives(c);
            let precision = ratio(tp, tp + cm.false_positives(c));
            let recall = ratio(tp, tp + cm.false_negatives(c));
            ClassMetrics {
                precision,
                recall,
                f1: f1_score(precision, recall),
                support: cm.counts[c].iter().sum(),
            }
        })
        .collect()
}

pub fn weighted(classes: &[ClassMetrics]) -> Result<Weighted, MetricsError> {
    let total: u64 = classes.iter().map(|c| c.support).sum();
    if total == 0 {
        return Err(MetricsError::Empty);
    }
    let t = total as f64;
    let avg = |f: fn(&ClassMetrics) -> f64| {
        classes.iter().map(|c| c.support as f64 * f(c)).sum::<f64>() / t
    };
    Ok(Weighted {
        precision: avg(|c| c.precision),
        recall: avg(|c| c.recall),
        f1: avg(|c| c.f1),
    })
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(cm.trace() as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub weighted: Weighted,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
}

impl MetricsReport {
    pub fn from_confusion(cm: ConfusionMatrix) -> Result<Self, MetricsError> {
        let per_class = per_class(&cm);
        Ok(Self {
            accuracy: accuracy(&cm)?,
            weighted: weighted(&per_class)?,
            per_class,
            confusion: cm,
        })
    }

    pub fn from_predictions(preds: &[usize], labels: &[usize], n_classes: usize) -> Result<Self, MetricsError> {
        Self::from_confusion(confusion(preds, labels, n_classes)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tallies() {
        let cm = confusion(&[0, 1, 1], &[0, 0, 1], 2).unwrap();
        assert_eq!(cm.get(0, 0), 1);
        assert_eq!(cm.get(0, 1), 1);
        assert_eq!(cm.get(1, 1), 1);
        assert_eq!(cm.get(1, 0), 0);
        let diag = confusion(&[2, 0, 1], &[2, 0, 1], 3).unwrap();
        assert_eq!(diag.trace(), diag.total());
        let empty = confusion(&[], &[], 4).unwrap();
        assert_eq!(empty.total(), 0);
        assert_eq!(
            confusion(&[3], &[0], 3),
            Err(MetricsError::ClassOutOfRange { class: 3, n_classes: 3 })
        );
        assert!(confusion(&[0], &[], 3).is_err());
    }

    #[test]
    fn per_class_arithmetic() {
        // class 0: TP 8, FN 2 (predicted 1), FP 2 (true 1 predicted 0)
        let cm = ConfusionMatrix::from_counts(vec![vec![8, 2, 0], vec![2, 5, 0], vec![0, 0, 0]]).unwrap();
        let m = per_class(&cm);
        assert!((m[0].precision - 0.8).abs() < 1e-15);
        assert!((m[0].recall - 0.8).abs() < 1e-15);
        assert!((m[0].f1 - 0.8).abs() < 1e-15);
        assert_eq!(m[2], ClassMetrics { precision: 0.0, recall: 0.0, f1: 0.0, support: 0 });
        assert_eq!(cm.true_negatives(0), 5);
    }

    #[test]
    fn weighted_values() {
        let perfect = MetricsReport::from_predictions(&[0, 1, 1, 2], &[0, 1, 1, 2], 3).unwrap();
        assert_eq!(perfect.weighted, Weighted { precision: 1.0, recall: 1.0, f1: 1.0 });
        let classes = [
            ClassMetrics { precision: 1.0, recall: 1.0, f1: 1.0, support: 9 },
            ClassMetrics { precision: 0.0, recall: 0.0, f1: 0.0, support: 1 },
        ];
        assert!((weighted(&classes).unwrap().f1 - 0.9).abs() < 1e-15);
        assert_eq!(weighted(&[]), Err(MetricsError::Empty));
    }

    #[test]
    fn accuracy_values() {
        let cm = confusion(&[0, 0, 0, 0], &[0, 0, 0, 1], 2).unwrap();
        assert_eq!(accuracy(&cm).unwrap(), 0.75);
        assert_eq!(accuracy(&ConfusionMatrix::new(3)), Err(MetricsError::Empty));
    }
}
