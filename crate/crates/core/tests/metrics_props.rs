mod common;

use common::{brute_accuracy, brute_per_class, brute_weighted, random_pairs, rng};
use fediron_core::metrics::{confusion, MetricsReport};
use proptest::prelude::*;
use rand::Rng;

fn check(pairs: &[(usize, usize)], n_classes: usize) -> Result<(), String> {
    let labels: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let preds: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let report = MetricsReport::from_predictions(&preds, &labels, n_classes).map_err(|e| e.to_string())?;
    let oracle = brute_per_class(pairs, n_classes);
    for (c, (got, want)) in report.per_class.iter().zip(&oracle).enumerate() {
        let diffs = [
            (got.precision - want.0).abs(),
            (got.recall - want.1).abs(),
            (got.f1 - want.2).abs(),
        ];
        if diffs.iter().any(|d| *d > 1e-12) || got.support != want.3 {
            return Err(format!("class {c}: {got:?} vs {want:?}"));
        }
    }
    let (p, r, f) = brute_weighted(&oracle);
    let w = &report.weighted;
    if (w.precision - p).abs() > 1e-12 || (w.recall - r).abs() > 1e-12 || (w.f1 - f).abs() > 1e-12 {
        return Err(format!("weighted {w:?} vs ({p}, {r}, {f})"));
    }
    if (report.accuracy - brute_accuracy(pairs)).abs() > 1e-12 {
        return Err(format!("accuracy {} vs {}", report.accuracy, brute_accuracy(pairs)));
    }
    Ok(())
}

#[test]
fn thousand_random_matrices_match_the_oracle() {
    let mut r = rng(0x3E7);
    let mut checked = 0;
    while checked < 1000 {
        let n_classes = r.random_range(1..=10);
        let pairs = random_pairs(&mut r, n_classes, 30);
        if pairs.is_empty() {
            continue;
        }
        check(&pairs, n_classes).unwrap();
        checked += 1;
    }
}

#[test]
fn diagonal_matrix_has_recall_equal_to_accuracy() {
    let pairs: Vec<(usize, usize)> = (0..4).flat_map(|c| std::iter::repeat_n((c, c), c + 1)).collect();
    let labels: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let report = MetricsReport::from_predictions(&labels, &labels, 4).unwrap();
    assert_eq!(report.accuracy, 1.0);
    assert_eq!(report.weighted.recall, report.accuracy);
}

proptest! {
    #[test]
    fn report_values_are_bounded_and_finite(seed in any::<u64>(), n_classes in 1usize..10) {
        let pairs = random_pairs(&mut rng(seed), n_classes, 12);
        prop_assume!(!pairs.is_empty());
        let labels: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let preds: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let report = MetricsReport::from_predictions(&preds, &labels, n_classes).unwrap();
        let w = &report.weighted;
        for v in [report.accuracy, w.precision, w.recall, w.f1] {
            prop_assert!(v.is_finite() && (0.0..=1.0).contains(&v));
        }
        for c in &report.per_class {
            if c.precision > 0.0 && c.recall > 0.0 {
                prop_assert!(c.f1 >= c.precision.min(c.recall) - 1e-15);
                prop_assert!(c.f1 <= c.precision.max(c.recall) + 1e-15);
            }
        }
        let cm = confusion(&preds, &labels, n_classes).unwrap();
        prop_assert_eq!(cm.total(), pairs.len() as u64);
        for c in 0..n_classes {
            let sum = cm.true_positives(c) + cm.false_positives(c) + cm.false_negatives(c) + cm.true_negatives(c);
            prop_assert_eq!(sum, cm.total());
        }
    }

    #[test]
    fn single_class_weighted_equals_that_class(n in 1usize..50, wrong in 0usize..50) {
        let mut labels = vec![0usize; n];
        let mut preds = vec![0usize; n];
        labels.extend(std::iter::repeat_n(0, wrong));
        preds.extend(std::iter::repeat_n(1, wrong));
        let report = MetricsReport::from_predictions(&preds, &labels, 2).unwrap();
        prop_assert!((report.weighted.f1 - report.per_class[0].f1).abs() <= 1e-12);
        prop_assert!((report.weighted.recall - report.per_class[0].recall).abs() <= 1e-12);
    }
}
