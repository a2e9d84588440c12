//! Prepared-dataset directories.
//!
//! A directory holds `manifest.json`, one `client_NN.bin` per client and
//! `residual.bin` for the server pool. Every `.bin` file is: the magic
//! `FLIDP1`, a little-endian `u64` header length, a JSON header
//! ([`BlockHeader`]), then the train feature matrix (row-major binary64),
//! the train labels (`u64`), the test feature matrix and the test labels.

use std::path::Path;

use fediron_core::flow::PreparedDataset;
use fediron_core::nn::Dataset;
use fediron_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::output::OutputGuard;

pub const MAGIC: &[u8; 6] = b"FLIDP1";
pub const MANIFEST: &str = "manifest.json";
pub const RESIDUAL_FILE: &str = "residual.bin";
/// `client_id` of the residual block.
pub const RESIDUAL_ID: usize = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockHeader {
    pub format: String,
    pub client_id: usize,
    pub dst_ip: String,
    pub n_features: usize,
    pub train_rows: usize,
    pub test_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientEntry {
    pub client_id: usize,
    pub dst_ip: String,
    pub file: String,
    pub total: u64,
    pub class_counts: Vec<u64>,
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualEntry {
    pub file: String,
    pub total: u64,
    pub class_counts: Vec<u64>,
    pub distinct_ips: usize,
}

/// Client total against the published reference, when one exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TotalDiff {
    pub client_id: usize,
    pub expected: u64,
    pub actual: u64,
    pub diff: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    /// `synth` or `csv`.
    pub source: String,
    pub seed: u64,
    pub classes: Vec<String>,
    pub feature_names: Vec<String>,
    pub n_features: usize,
    pub clients: Vec<ClientEntry>,
    pub residual: Option<ResidualEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_diff: Option<Vec<TotalDiff>>,
}

/// A loaded prepared directory.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedDir {
    pub manifest: Manifest,
    pub clients: Vec<PreparedDataset>,
    pub residual: Option<Dataset>,
}

impl PreparedDir {
    pub fn n_classes(&self) -> usize {
        self.manifest.classes.len()
    }

    pub fn n_features(&self) -> usize {
        self.manifest.n_features
    }

    pub fn residual(&self) -> Result<&Dataset, CliError> {
        match &self.residual {
            Some(d) if !d.is_empty() => Ok(d),
            _ => Err(CliError::Usage("the prepared dataset has an empty residual pool".into())),
        }
    }

    pub fn train_union(&self) -> Result<Dataset, CliError> {
        Ok(Dataset::concat(self.clients.iter().map(|c| &c.train))?)
    }
}

pub fn client_file(client_id: usize) -> String {
    format!("client_{client_id:02}.bin")
}

fn push_matrix(out: &mut Vec<u8>, m: &Matrix) {
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn push_labels(out: &mut Vec<u8>, y: &[usize]) {
    for &l in y {
        out.extend_from_slice(&(l as u64).to_le_bytes());
    }
}

pub fn encode_block(client_id: usize, dst_ip: &str, train: &Dataset, test: &Dataset) -> Vec<u8> {
    let n_features = train.x.cols().max(test.x.cols());
    let header = BlockHeader {
        format: "FLIDP1".into(),
        client_id,
        dst_ip: dst_ip.to_string(),
        n_features,
        train_rows: train.len(),
        test_rows: test.len(),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(14 + header.len() + 8 * (train.len() + test.len()) * (n_features + 1));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    push_matrix(&mut out, &train.x);
    push_labels(&mut out, &train.y);
    push_matrix(&mut out, &test.x);
    push_labels(&mut out, &test.y);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CliError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            CliError::Prepared(format!("truncated block: needed {n} bytes at offset {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn words(&mut self, n: usize) -> Result<impl Iterator<Item = [u8; 8]> + 'a, CliError> {
        let bytes = n
            .checked_mul(8)
            .ok_or_else(|| CliError::Prepared("block dimensions overflow".into()))?;
        Ok(self
            .take(bytes)?
            .chunks_exact(8)
            .map(|c| c.try_into().expect("8 bytes")))
    }

    fn dataset(&mut self, rows: usize, cols: usize, n_classes: usize) -> Result<Dataset, CliError> {
        let x: Vec<f64> = self.words(rows * cols)?.map(f64::from_le_bytes).collect();
        let y: Vec<usize> = self.words(rows)?.map(|w| u64::from_le_bytes(w) as usize).collect();
        if let Some(&bad) = y.iter().find(|&&l| l >= n_classes) {
            return Err(CliError::Prepared(format!("label {bad} out of range for {n_classes} classes")));
        }
        Ok(Dataset::new(Matrix::from_vec(rows, cols, x)?, y)?)
    }
}

pub fn decode_block(bytes: &[u8], n_classes: usize) -> Result<(BlockHeader, Dataset, Dataset), CliError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(6).ok() != Some(MAGIC.as_slice()) {
        return Err(CliError::Prepared("not a FLIDP1 block (bad magic)".into()));
    }
    let len = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes")) as usize;
    let header: BlockHeader = serde_json::from_slice(r.take(len)?)
        .map_err(|e| CliError::Prepared(format!("unreadable block header: {e}")))?;
    let train = r.dataset(header.train_rows, header.n_features, n_classes)?;
    let test = r.dataset(header.test_rows, header.n_features, n_classes)?;
    if r.pos != bytes.len() {
        return Err(CliError::Prepared(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok((header, train, test))
}

pub fn write_dir(dir: &PreparedDir, guard: &mut OutputGuard) -> Result<(), CliError> {
    for c in &dir.clients {
        guard.write(&client_file(c.client_id), &encode_block(c.client_id, &c.dst_ip, &c.train, &c.test))?;
    }
    if let Some(res) = &dir.residual {
        let empty = Dataset::new(Matrix::zeros(0, res.x.cols()), vec![])?;
        guard.write(RESIDUAL_FILE, &encode_block(RESIDUAL_ID, "", res, &empty))?;
    }
    guard.write_json(MANIFEST, &dir.manifest)
}

pub fn read_dir(path: &Path) -> Result<PreparedDir, CliError> {
    let mpath = path.join(MANIFEST);
    let text = std::fs::read(&mpath).map_err(|e| CliError::io(&mpath, e))?;
    let manifest: Manifest = serde_json::from_slice(&text).map_err(|e| CliError::json(&mpath, e))?;
    let n_classes = manifest.classes.len();
    let read = |file: &str| -> Result<(BlockHeader, Dataset, Dataset), CliError> {
        let p = path.join(file);
        let bytes = std::fs::read(&p).map_err(|e| CliError::io(&p, e))?;
        let block = decode_block(&bytes, n_classes)
            .map_err(|e| CliError::Prepared(format!("{}: {e}", p.display())))?;
        if block.0.n_features != manifest.n_features {
            return Err(CliError::Prepared(format!(
                "{}: {} features, manifest says {}",
                p.display(),
                block.0.n_features,
                manifest.n_features
            )));
        }
        Ok(block)
    };
    let mut clients = Vec::with_capacity(manifest.clients.len());
    for entry in &manifest.clients {
        let (h, train, test) = read(&entry.file)?;
        if h.client_id != entry.client_id {
            return Err(CliError::Prepared(format!(
                "{} holds client {}, manifest says {}",
                entry.file, h.client_id, entry.client_id
            )));
        }
        clients.push(PreparedDataset {
            client_id: h.client_id,
            dst_ip: h.dst_ip,
            train,
            test,
        });
    }
    let residual = match &manifest.residual {
        Some(entry) => Some(read(&entry.file)?.1),
        None => None,
    };
    Ok(PreparedDir {
        manifest,
        clients,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(rows: usize, cols: usize, offset: f64) -> Dataset {
        let x = (0..rows * cols).map(|i| offset + i as f64 * 0.25).collect();
        Dataset::new(Matrix::from_vec(rows, cols, x).unwrap(), (0..rows).map(|i| i % 3).collect()).unwrap()
    }

    #[test]
    fn block_round_trip() {
        let (train, test) = (ds(5, 4, 0.0), ds(2, 4, -1.0));
        let bytes = encode_block(3, "10.0.0.3", &train, &test);
        let (h, a, b) = decode_block(&bytes, 3).unwrap();
        assert_eq!((h.client_id, h.dst_ip.as_str()), (3, "10.0.0.3"));
        assert_eq!((a, b), (train, test));
    }

    #[test]
    fn corrupt_blocks_are_rejected() {
        let bytes = encode_block(1, "x", &ds(3, 2, 0.0), &ds(1, 2, 0.0));
        assert!(decode_block(&bytes[..bytes.len() - 1], 3).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_block(&extra, 3).is_err());
        assert!(decode_block(&bytes, 2).unwrap_err().to_string().contains("label 2"));
        let mut magic = bytes;
        magic[5] = b'9';
        assert!(decode_block(&magic, 3).is_err());
    }
}
