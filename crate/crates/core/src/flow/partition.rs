use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FlowError, FlowRecord, RawDataset};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// All records of one destination IP, owned by one federated client.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientPartition {
    pub client_id: usize,
    pub dst_ip: String,
    pub records: Vec<FlowRecord>,
    pub split: Option<Split>,
}

impl ClientPartition {
    pub fn new(client_id: usize, dst_ip: impl Into<String>, records: Vec<FlowRecord>) -> Self {
        Self {
            client_id,
            dst_ip: dst_ip.into(),
            records,
            split: None,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn class_counts(&self, n_classes: usize) -> Vec<u64> {
        super::class_counts(&self.records, n_classes)
    }
}

/// Groups records by destination IP. The `k` largest groups become clients
/// `1..=k` in descending size order (ties: lexicographic IP); everything else
/// forms the residual pool.
pub fn partition_by_dst_ip(data: RawDataset, k: usize) -> Result<(Vec<ClientPartition>, RawDataset), FlowError> {
    if k == 0 {
        return Err(FlowError::InvalidArgument("k must be at least 1".into()));
    }
    let RawDataset { schema, records } = data;
    let mut groups: BTreeMap<String, Vec<FlowRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.dst_ip.clone()).or_default().push(r);
    }
    if groups.len() < k {
        return Err(FlowError::NotEnoughIps {
            requested: k,
            available: groups.len(),
        });
    }
    let mut ranked: Vec<(String, Vec<FlowRecord>)> = groups.into_iter().collect();
    // BTreeMap iteration is already lexicographic, and the sort is stable.
    ranked.sort_by_key(|g| std::cmp::Reverse(g.1.len()));
    let rest = ranked.split_off(k);
    let clients = ranked
        .into_iter()
        .enumerate()
        .map(|(i, (ip, recs))| ClientPartition::new(i + 1, ip, recs))
        .collect();
    let mut residual: Vec<(String, Vec<FlowRecord>)> = rest;
    residual.sort_by(|a, b| a.0.cmp(&b.0));
    let residual = residual.into_iter().flat_map(|(_, r)| r).collect();
    Ok((clients, RawDataset::new(schema, residual)))
}

/// `round(fraction · n)` with halves rounded up, clamped to `n`.
pub fn stratified_train_count(n: usize, fraction: f64) -> usize {
    if n < 2 {
        return n;
    }
    let t = (fraction * n as f64 + 0.5).floor() as usize;
    t.min(n)
}

/// Per-class seeded split. Classes with fewer than two samples go entirely to
/// train. Index lists are returned sorted.
pub fn stratified_split(
    mut partition: ClientPartition,
    train_fraction: f64,
    seed: u64,
) -> Result<ClientPartition, FlowError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(FlowError::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    if partition.records.is_empty() {
        return Err(FlowError::EmptyPartition(partition.client_id));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, r) in partition.records.iter().enumerate() {
        by_class.entry(r.label).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (_, mut idx) in by_class {
        let n_train = stratified_train_count(idx.len(), train_fraction);
        idx.shuffle(&mut rng);
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    partition.split = Some(Split { train, test });
    Ok(partition)
}
