use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use super::{ColumnKind, FeatureSchema, FlowError};

/// A single cell of the feature view.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Cat(Arc<str>),
    Missing,
}

impl Value {
    pub fn cat(s: &str) -> Self {
        Value::Cat(Arc::from(s))
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(x) => Some(*x),
            _ => None,
        }
    }

    fn is_clean(&self) -> bool {
        match self {
            Value::Num(x) => x.is_finite(),
            Value::Cat(_) => true,
            Value::Missing => false,
        }
    }
}

/// One network-flow sample. `dst_ip` is metadata for partitioning only.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowRecord {
    pub dst_ip: String,
    pub features: Vec<Value>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub schema: FeatureSchema,
    pub records: Vec<FlowRecord>,
}

impl RawDataset {
    pub fn new(schema: FeatureSchema, records: Vec<FlowRecord>) -> Self {
        Self { schema, records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn class_counts(&self) -> Vec<u64> {
        super::class_counts(&self.records, self.schema.n_classes())
    }
}

/// Reads a flow CSV whose header must list the schema's columns in order.
/// Unparseable or empty feature cells become [`Value::Missing`].
pub fn load_flows(path: &Path, schema: &FeatureSchema) -> Result<RawDataset, FlowError> {
    if !path.exists() {
        return Err(FlowError::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| FlowError::Csv(e.to_string()))?;
    let header = reader.headers().map_err(|e| FlowError::Csv(e.to_string()))?.clone();
    check_header(&header, schema)?;

    let key_pos = schema
        .columns()
        .iter()
        .position(|c| c.name == schema.partition_key())
        .expect("schema validated the partition key");
    let mut interners: Vec<HashMap<String, Arc<str>>> = vec![HashMap::new(); schema.columns().len()];
    let mut records = Vec::new();
    let mut row = csv::StringRecord::new();
    let mut line = 1usize;
    loop {
        match reader.read_record(&mut row) {
            Ok(true) => {}
            Ok(false) => break,
            Err(e) => return Err(FlowError::Csv(e.to_string())),
        }
        line += 1;
        let mut features = Vec::with_capacity(schema.n_features_after_drop());
        let mut label = None;
        for (i, (col, cell)) in schema.columns().iter().zip(row.iter()).enumerate() {
            let cell = cell.trim();
            match col.kind {
                ColumnKind::Numeric => features.push(match cell.parse::<f64>() {
                    Ok(x) if !cell.is_empty() => Value::Num(x),
                    _ => Value::Missing,
                }),
                ColumnKind::Categorical => features.push(if cell.is_empty() {
                    Value::Missing
                } else {
                    let interner = &mut interners[i];
                    let sym = match interner.get(cell) {
                        Some(s) => s.clone(),
                        None => {
                            let s: Arc<str> = Arc::from(cell);
                            interner.insert(cell.to_string(), s.clone());
                            s
                        }
                    };
                    Value::Cat(sym)
                }),
                ColumnKind::Label => {
                    let id = schema.classes().id(cell).or_else(|| schema.classes().id(&cell.to_ascii_lowercase()));
                    label = Some(id.ok_or_else(|| FlowError::UnknownLabel {
                        line,
                        label: cell.to_string(),
                    })?);
                }
                ColumnKind::Drop => {}
            }
        }
        records.push(FlowRecord {
            dst_ip: row.get(key_pos).unwrap_or("").trim().to_string(),
            features,
            label: label.expect("schema has a label column"),
        });
    }
    Ok(RawDataset::new(schema.clone(), records))
}

fn check_header(header: &csv::StringRecord, schema: &FeatureSchema) -> Result<(), FlowError> {
    for (i, col) in schema.columns().iter().enumerate() {
        match header.get(i).map(str::trim) {
            Some(found) if found == col.name => {}
            found => {
                return Err(FlowError::HeaderMismatch {
                    position: i,
                    expected: col.name.clone(),
                    found: found.map(str::to_string),
                })
            }
        }
    }
    if header.len() > schema.columns().len() {
        return Err(FlowError::HeaderMismatch {
            position: schema.columns().len(),
            expected: "<end of header>".into(),
            found: header.get(schema.columns().len()).map(str::to_string),
        });
    }
    Ok(())
}

/// Drops rows with missing or non-finite feature values or an empty
/// partition key, then drops repeated (features, label) rows keeping the
/// first occurrence.
pub fn clean(raw: RawDataset) -> RawDataset {
    let RawDataset { schema, records } = raw;
    let mut seen: HashSet<Vec<u8>> = HashSet::with_capacity(records.len());
    let mut kept = Vec::with_capacity(records.len());
    for r in records {
        if r.dst_ip.is_empty() || !r.features.iter().all(Value::is_clean) {
            continue;
        }
        if seen.insert(dedup_key(&r)) {
            kept.push(r);
        }
    }
    RawDataset::new(schema, kept)
}

fn dedup_key(r: &FlowRecord) -> Vec<u8> {
    let mut key = Vec::with_capacity(r.features.len() * 9 + 8);
    for v in &r.features {
        match v {
            Value::Num(x) => {
                key.push(0);
                key.extend_from_slice(&x.to_bits().to_le_bytes());
            }
            Value::Cat(s) => {
                key.push(1);
                key.extend_from_slice(&(s.len() as u64).to_le_bytes());
                key.extend_from_slice(s.as_bytes());
            }
            Value::Missing => key.push(2),
        }
    }
    key.extend_from_slice(&(r.label as u64).to_le_bytes());
    key
}
