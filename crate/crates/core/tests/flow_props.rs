mod common;

use common::{expected_train_count, numeric_record, rng};
use fediron_core::flow::{
    clean, fit_apply_codec, partition_by_dst_ip, stratified_split, ClientPartition, Column, ColumnKind,
    FeatureSchema, LabelIndex, RawDataset, TRAIN_FRACTION,
};
use fediron_core::FlowRecord;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn schema(n_features: usize, n_classes: usize) -> FeatureSchema {
    let mut columns = vec![Column {
        name: "dst_ip".into(),
        kind: ColumnKind::Drop,
    }];
    for j in 0..n_features {
        columns.push(Column {
            name: format!("f{j}"),
            kind: ColumnKind::Numeric,
        });
    }
    columns.push(Column {
        name: "type".into(),
        kind: ColumnKind::Label,
    });
    let classes = LabelIndex::new((0..n_classes).map(|c| format!("c{c}"))).unwrap();
    FeatureSchema::new(columns, "dst_ip", classes).unwrap()
}

fn partition_with_counts(counts: &[usize], seed: u64) -> ClientPartition {
    let mut r = rng(seed);
    let mut records: Vec<FlowRecord> = counts
        .iter()
        .enumerate()
        .flat_map(|(c, &n)| (0..n).map(move |i| (c, i)))
        .map(|(c, i)| numeric_record("10.0.0.1", c, &[i as f64, c as f64]))
        .collect();
    records.shuffle(&mut r);
    ClientPartition::new(1, "10.0.0.1", records)
}

#[test]
fn thousand_random_count_vectors_split_exactly() {
    let mut r = rng(0x5717);
    for case in 0..1000 {
        let n_classes = r.random_range(1..=10);
        let counts: Vec<usize> = (0..n_classes)
            .map(|_| match r.random_range(0..4) {
                0 => r.random_range(0..3),
                _ => r.random_range(0..200),
            })
            .collect();
        if counts.iter().sum::<usize>() == 0 {
            continue;
        }
        let seed = r.random();
        let p = partition_with_counts(&counts, case);
        let split = stratified_split(p.clone(), TRAIN_FRACTION, seed).unwrap();
        let s = split.split.as_ref().unwrap();
        for (c, &n) in counts.iter().enumerate() {
            let train = s.train.iter().filter(|&&i| p.records[i].label == c).count();
            let test = s.test.iter().filter(|&&i| p.records[i].label == c).count();
            assert_eq!(train, expected_train_count(n), "case {case} class {c} of size {n}");
            assert_eq!(train + test, n);
        }
        let again = stratified_split(p, TRAIN_FRACTION, seed).unwrap();
        assert_eq!(again.split, split.split);
    }
}

#[test]
fn cleaning_drops_bad_rows_and_duplicates() {
    let s = schema(2, 2);
    let rows = vec![
        numeric_record("a", 0, &[1.0, 2.0]),
        numeric_record("b", 0, &[1.0, 2.0]),
        numeric_record("a", 1, &[1.0, 2.0]),
        numeric_record("a", 1, &[f64::NAN, 2.0]),
        numeric_record("", 1, &[3.0, 2.0]),
        numeric_record("c", 1, &[4.0, f64::INFINITY]),
        numeric_record("c", 1, &[5.0, 6.0]),
    ];
    let cleaned = clean(RawDataset::new(s, rows));
    let kept: Vec<(&str, usize)> = cleaned.records.iter().map(|r| (r.dst_ip.as_str(), r.label)).collect();
    assert_eq!(kept, vec![("a", 0), ("a", 1), ("c", 1)]);
}

proptest! {
    #[test]
    fn partition_is_permutation_invariant(
        sizes in prop::collection::vec(1usize..30, 1..8),
        k_frac in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let s = schema(1, 2);
        let mut records = Vec::new();
        for (g, &n) in sizes.iter().enumerate() {
            for i in 0..n {
                records.push(numeric_record(&format!("ip{g}"), i % 2, &[(g * 100 + i) as f64]));
            }
        }
        let total = records.len();
        let k = 1 + ((sizes.len() - 1) as f64 * k_frac) as usize;
        let (a, res_a) = partition_by_dst_ip(RawDataset::new(s.clone(), records.clone()), k).unwrap();
        records.shuffle(&mut rng(seed));
        let (b, res_b) = partition_by_dst_ip(RawDataset::new(s, records), k).unwrap();

        prop_assert_eq!(a.len(), k);
        let sizes_a: Vec<usize> = a.iter().map(|c| c.len()).collect();
        prop_assert!(sizes_a.windows(2).all(|w| w[0] >= w[1]));
        prop_assert_eq!(sizes_a.iter().sum::<usize>() + res_a.len(), total);
        for (ca, cb) in a.iter().zip(&b) {
            prop_assert_eq!(&ca.dst_ip, &cb.dst_ip);
            prop_assert_eq!(ca.client_id, cb.client_id);
            let key = |r: &FlowRecord| r.features[0].as_num().unwrap().to_bits();
            let mut ka: Vec<u64> = ca.records.iter().map(key).collect();
            let mut kb: Vec<u64> = cb.records.iter().map(key).collect();
            ka.sort_unstable();
            kb.sort_unstable();
            prop_assert_eq!(ka, kb);
        }
        prop_assert_eq!(res_a.len(), res_b.len());
    }

    #[test]
    fn codec_standardizes_training_columns(
        n in 5usize..60,
        seed in any::<u64>(),
        offset in -1e3f64..1e3,
        spread in 1e-2f64..1e3,
    ) {
        let s = schema(3, 2);
        let mut r = rng(seed);
        let records: Vec<FlowRecord> = (0..n)
            .map(|i| {
                numeric_record(
                    "x",
                    i % 2,
                    &[offset + spread * r.random_range(-1.0..1.0), r.random_range(0.0..1.0), 7.0],
                )
            })
            .collect();
        let split = stratified_split(ClientPartition::new(1, "x", records), TRAIN_FRACTION, seed).unwrap();
        let (prepared, _) = fit_apply_codec(&split, &s).unwrap();
        let x = &prepared.train.x;
        let m = x.rows() as f64;
        for j in 0..x.cols() {
            let col: Vec<f64> = (0..x.rows()).map(|i| x.get(i, j)).collect();
            let mean = col.iter().sum::<f64>() / m;
            let std = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m).sqrt();
            prop_assert!(mean.abs() < 1e-9, "column {} mean {}", j, mean);
            if j < 2 {
                prop_assert!((std - 1.0).abs() < 1e-9, "column {} std {}", j, std);
            } else {
                prop_assert_eq!(std, 0.0);
            }
        }
    }
}
