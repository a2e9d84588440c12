use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ClientPartition, FeatureKind, FeatureSchema, FlowError, FlowRecord, RawDataset, Value};
use crate::nn::{Dataset, Matrix};

/// Code given to categories that never appeared in the training split.
pub const UNSEEN_CATEGORY: f64 = -1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnCodec {
    pub name: String,
    /// Ordinal codes in lexicographic category order; `None` for numeric columns.
    pub categories: Option<BTreeMap<String, u32>>,
    pub mean: f64,
    /// Population standard deviation, replaced by 1 for constant columns.
    pub std: f64,
}

impl ColumnCodec {
    fn raw(&self, v: &Value) -> f64 {
        match (v, &self.categories) {
            (Value::Num(x), None) => *x,
            (Value::Cat(s), Some(codes)) => codes.get(s.as_ref()).map_or(UNSEEN_CATEGORY, |&c| c as f64),
            (Value::Num(x), Some(codes)) => {
                // A numeric cell in a categorical column is treated as its text.
                codes.get(&x.to_string()).map_or(UNSEEN_CATEGORY, |&c| c as f64)
            }
            (Value::Cat(_), None) | (Value::Missing, _) => f64::NAN,
        }
    }

    pub fn encode(&self, v: &Value) -> f64 {
        (self.raw(v) - self.mean) / self.std
    }
}

/// Per-client ordinal encoding and standardization, fitted on the training
/// split only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCodec {
    pub columns: Vec<ColumnCodec>,
}

impl FeatureCodec {
    pub fn fit(records: &[&FlowRecord], schema: &FeatureSchema) -> Self {
        let kinds = schema.feature_kinds();
        let names = schema.feature_names();
        let columns = kinds
            .iter()
            .zip(names)
            .enumerate()
            .map(|(j, (kind, name))| {
                let categories = match kind {
                    FeatureKind::Numeric => None,
                    FeatureKind::Categorical => {
                        let mut seen: BTreeMap<String, u32> = BTreeMap::new();
                        for r in records {
                            let key = match &r.features[j] {
                                Value::Cat(s) => s.to_string(),
                                Value::Num(x) => x.to_string(),
                                Value::Missing => continue,
                            };
                            seen.entry(key).or_insert(0);
                        }
                        for (code, v) in seen.values_mut().enumerate() {
                            *v = code as u32;
                        }
                        Some(seen)
                    }
                };
                let mut col = ColumnCodec {
                    name: name.to_string(),
                    categories,
                    mean: 0.0,
                    std: 1.0,
                };
                let raw: Vec<f64> = records.iter().map(|r| col.raw(&r.features[j])).collect();
                let (mean, std) = population_stats(&raw);
                col.mean = mean;
                col.std = if std > 0.0 && std.is_finite() { std } else { 1.0 };
                col
            })
            .collect();
        Self { columns }
    }

    pub fn transform<'a>(&self, records: impl ExactSizeIterator<Item = &'a FlowRecord>) -> Matrix {
        let cols = self.columns.len();
        let mut m = Matrix::zeros(records.len(), cols);
        for (i, r) in records.enumerate() {
            for (out, (codec, v)) in m.row_mut(i).iter_mut().zip(self.columns.iter().zip(&r.features)) {
                *out = codec.encode(v);
            }
        }
        m
    }
}

/// Mean and population standard deviation.
pub fn population_stats(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// A client's encoded, standardized train and test sets.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedDataset {
    pub client_id: usize,
    pub dst_ip: String,
    pub train: Dataset,
    pub test: Dataset,
}

impl PreparedDataset {
    pub fn n_features(&self) -> usize {
        self.train.n_features()
    }
}

/// Fits the codec on the partition's training split and applies it to both splits.
pub fn fit_apply_codec(
    partition: &ClientPartition,
    schema: &FeatureSchema,
) -> Result<(PreparedDataset, FeatureCodec), FlowError> {
    let split = partition
        .split
        .as_ref()
        .ok_or(FlowError::NotSplit(partition.client_id))?;
    let train_recs: Vec<&FlowRecord> = split.train.iter().map(|&i| &partition.records[i]).collect();
    let codec = FeatureCodec::fit(&train_recs, schema);
    let build = |idx: &[usize]| {
        let x = codec.transform(idx.iter().map(|&i| &partition.records[i]));
        let y = idx.iter().map(|&i| partition.records[i].label).collect();
        Dataset::new(x, y).expect("one label per row")
    };
    let prepared = PreparedDataset {
        client_id: partition.client_id,
        dst_ip: partition.dst_ip.clone(),
        train: build(&split.train),
        test: build(&split.test),
    };
    Ok((prepared, codec))
}

/// Encodes a whole pool (the server residual) with a codec fitted on all of it.
pub fn prepare_pool(raw: &RawDataset) -> Result<(Dataset, FeatureCodec), FlowError> {
    if raw.records.is_empty() {
        return Err(FlowError::InvalidArgument("the pool is empty".into()));
    }
    let recs: Vec<&FlowRecord> = raw.records.iter().collect();
    let codec = FeatureCodec::fit(&recs, &raw.schema);
    let x = codec.transform(raw.records.iter());
    let y = raw.records.iter().map(|r| r.label).collect();
    Ok((Dataset::new(x, y).expect("one label per row"), codec))
}

/// Encodes a pool one destination IP at a time, each with its own codec, the
/// way clients are prepared. Rows come out grouped by IP in lexicographic order.
pub fn prepare_pool_by_ip(raw: &RawDataset) -> Result<Dataset, FlowError> {
    if raw.records.is_empty() {
        return Err(FlowError::InvalidArgument("the pool is empty".into()));
    }
    let mut groups: BTreeMap<&str, Vec<&FlowRecord>> = BTreeMap::new();
    for r in &raw.records {
        groups.entry(r.dst_ip.as_str()).or_default().push(r);
    }
    let parts: Vec<Dataset> = groups
        .values()
        .map(|recs| {
            let codec = FeatureCodec::fit(recs, &raw.schema);
            let x = codec.transform(recs.iter().copied());
            let y = recs.iter().map(|r| r.label).collect();
            Dataset::new(x, y).expect("one label per row")
        })
        .collect();
    Ok(Dataset::concat(parts.iter()).expect("codecs share the schema width"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{stratified_split, Column, ColumnKind, LabelIndex};

    fn schema() -> FeatureSchema {
        let col = |n: &str, k| Column { name: n.into(), kind: k };
        FeatureSchema::new(
            vec![
                col("dst_ip", ColumnKind::Drop),
                col("proto", ColumnKind::Categorical),
                col("bytes", ColumnKind::Numeric),
                col("flat", ColumnKind::Numeric),
                col("type", ColumnKind::Label),
            ],
            "dst_ip",
            LabelIndex::new(["a"]).unwrap(),
        )
        .unwrap()
    }

    fn rec(proto: &str, bytes: f64) -> FlowRecord {
        FlowRecord {
            dst_ip: "x".into(),
            features: vec![Value::cat(proto), Value::Num(bytes), Value::Num(5.0)],
            label: 0,
        }
    }

    #[test]
    fn lexicographic_codes_and_standardization() {
        let recs = [rec("udp", 2.0), rec("tcp", 4.0), rec("icmp", 6.0)];
        let refs: Vec<&FlowRecord> = recs.iter().collect();
        let codec = FeatureCodec::fit(&refs, &schema());
        let codes = codec.columns[0].categories.as_ref().unwrap();
        assert_eq!(codes["icmp"], 0);
        assert_eq!(codes["tcp"], 1);
        assert_eq!(codes["udp"], 2);
        assert!((codec.columns[1].mean - 4.0).abs() < 1e-15);
        assert!((codec.columns[1].std - 1.632_993_161_855_452).abs() < 1e-12);
        let m = codec.transform(recs.iter());
        let bytes: Vec<f64> = (0..3).map(|i| m.get(i, 1)).collect();
        for (got, want) in bytes.iter().zip([-1.224_744_871_391_589, 0.0, 1.224_744_871_391_589]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert_eq!(codec.columns[2].std, 1.0);
        assert!((0..3).all(|i| m.get(i, 2) == 0.0));
    }

    #[test]
    fn unseen_category_is_minus_one_before_scaling() {
        let recs = [rec("tcp", 1.0), rec("udp", 2.0)];
        let refs: Vec<&FlowRecord> = recs.iter().collect();
        let codec = FeatureCodec::fit(&refs, &schema());
        let col = &codec.columns[0];
        let v = col.encode(&Value::cat("gre"));
        assert!((v - (UNSEEN_CATEGORY - col.mean) / col.std).abs() < 1e-15);
    }

    #[test]
    fn fit_uses_train_only() {
        let mut records: Vec<FlowRecord> = (0..10).map(|i| rec("tcp", i as f64)).collect();
        records.push(rec("tcp", 1000.0));
        let part = ClientPartition::new(1, "x", records);
        assert!(matches!(fit_apply_codec(&part, &schema()), Err(FlowError::NotSplit(1))));
        let part = stratified_split(part, 0.8, 5).unwrap();
        let (prep, codec) = fit_apply_codec(&part, &schema()).unwrap();
        let split = part.split.as_ref().unwrap();
        let value = |i: usize| if i == 10 { 1000.0 } else { i as f64 };
        let train_vals: Vec<f64> = split.train.iter().map(|&i| value(i)).collect();
        let (mean, _) = population_stats(&train_vals);
        assert!((codec.columns[1].mean - mean).abs() < 1e-12);
        assert_eq!(prep.train.len() + prep.test.len(), 11);
    }

    #[test]
    fn pool_by_ip_standardizes_each_ip_separately() {
        let mut recs = Vec::new();
        for (ip, base) in [("b", 100.0), ("a", 0.0)] {
            for i in 0..4 {
                let mut r = rec("tcp", base + i as f64);
                r.dst_ip = ip.into();
                recs.push(r);
            }
        }
        let raw = RawDataset::new(schema(), recs);
        let d = prepare_pool_by_ip(&raw).unwrap();
        assert_eq!(d.len(), 8);
        // Both IPs map to the same standardized column, in IP order.
        let col: Vec<f64> = (0..8).map(|i| d.x.get(i, 1)).collect();
        assert_eq!(col[..4], col[4..]);
        assert!(col[0] < 0.0 && col[3] > 0.0);
        assert!(prepare_pool_by_ip(&RawDataset::new(schema(), vec![])).is_err());
    }
}
