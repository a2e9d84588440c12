//! Flow-record ingestion and per-client preparation: CSV loading, cleaning,
//! partitioning by destination IP, stratified splitting, and per-client
//! ordinal encoding plus standardization.

mod codec;
mod ingest;
mod partition;
mod schema;

use std::path::PathBuf;

use thiserror::Error;

pub use codec::{fit_apply_codec, population_stats, prepare_pool, prepare_pool_by_ip, ColumnCodec, FeatureCodec, PreparedDataset, UNSEEN_CATEGORY};
pub use ingest::{clean, load_flows, FlowRecord, RawDataset, Value};
pub use partition::{partition_by_dst_ip, stratified_split, stratified_train_count, ClientPartition, Split};
pub use schema::{Column, ColumnKind, FeatureKind, FeatureSchema, LabelIndex, TON_IOT_CLASSES};

/// Train share of every client split.
pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("CSV error: {0}")]
    Csv(String),
    #[error("header mismatch at column {position}: expected `{expected}`, found {}", found.as_deref().map_or("nothing".to_string(), |f| format!("`{f}`")))]
    HeaderMismatch {
        position: usize,
        expected: String,
        found: Option<String>,
    },
    #[error("line {line}: unknown class label `{label}`")]
    UnknownLabel { line: usize, label: String },
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("requested {requested} clients but only {available} distinct destination IPs exist")]
    NotEnoughIps { requested: usize, available: usize },
    #[error("client {0} has no records")]
    EmptyPartition(usize),
    #[error("client {0} has not been split into train/test")]
    NotSplit(usize),
    #[error("{0}")]
    InvalidArgument(String),
}

pub fn class_counts(records: &[FlowRecord], n_classes: usize) -> Vec<u64> {
    let mut counts = vec![0u64; n_classes];
    for r in records {
        counts[r.label] += 1;
    }
    counts
}

/// Split and encode every client independently.
pub fn prepare_clients(
    clients: &[ClientPartition],
    schema: &FeatureSchema,
    seed: u64,
) -> Result<Vec<PreparedDataset>, FlowError> {
    use rayon::prelude::*;
    clients
        .par_iter()
        .map(|c| {
            let split = stratified_split(c.clone(), TRAIN_FRACTION, crate::seed::derive_seed(seed, &[c.client_id as u64]))?;
            fit_apply_codec(&split, schema).map(|(p, _)| p)
        })
        .collect()
}
