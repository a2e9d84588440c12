//! FLIDS1 checkpoints.
//!
//! Layout: the 6 magic bytes `FLIDS1`, the header length as a little-endian
//! `u64`, a UTF-8 JSON header, then for every layer its weights (row-major,
//! `out × in`) followed by its biases, all as little-endian binary64.

use std::collections::BTreeMap;
use std::path::Path;

use fediron_core::nn::{Activation, Layer, LayerSpec, ModelParams};
use fediron_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const MAGIC: &[u8; 6] = b"FLIDS1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerHeader {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub layers: Vec<LayerHeader>,
    pub classes: Vec<String>,
    /// Free-form provenance (preset, seed, command, creation time).
    pub metadata: BTreeMap<String, serde_json::Value>,
    /// Number of binary64 values in the payload.
    pub payload_values: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelParams,
    pub classes: Vec<String>,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl Checkpoint {
    pub fn new(model: ModelParams, classes: Vec<String>) -> Self {
        Self {
            model,
            classes,
            metadata: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.metadata.insert(key.to_string(), value.into());
        self
    }

    fn header(&self) -> CheckpointHeader {
        CheckpointHeader {
            format: "FLIDS1".into(),
            layers: self
                .model
                .specs()
                .iter()
                .map(|s| LayerHeader {
                    in_dim: s.in_dim,
                    out_dim: s.out_dim,
                    activation: s.activation,
                })
                .collect(),
            classes: self.classes.clone(),
            metadata: self.metadata.clone(),
            payload_values: self.model.num_params(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header()).expect("header serializes");
        let mut out = Vec::with_capacity(14 + header.len() + 8 * self.model.num_params());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for layer in self.model.layers() {
            for v in layer.weights.as_slice().iter().chain(&layer.biases) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CliError> {
        let bad = |msg: String| CliError::Checkpoint(msg);
        if bytes.len() < 14 || &bytes[..6] != MAGIC {
            return Err(bad("not a FLIDS1 checkpoint (bad magic)".into()));
        }
        let header_len = u64::from_le_bytes(bytes[6..14].try_into().expect("8 bytes")) as usize;
        let body = &bytes[14..];
        if header_len > body.len() {
            return Err(bad(format!("header length {header_len} exceeds file size")));
        }
        let header: CheckpointHeader =
            serde_json::from_slice(&body[..header_len]).map_err(|e| bad(format!("unreadable header: {e}")))?;
        if header.format != "FLIDS1" {
            return Err(bad(format!("unsupported format `{}`", header.format)));
        }
        let specs: Vec<LayerSpec> = header
            .layers
            .iter()
            .map(|l| LayerSpec::new(l.in_dim, l.out_dim, l.activation))
            .collect();
        let expected: usize = specs.iter().map(|s| s.out_dim * s.in_dim + s.out_dim).sum();
        if header.payload_values != expected {
            return Err(bad(format!(
                "header declares {} values but the layer dims need {expected}",
                header.payload_values
            )));
        }
        let payload = &body[header_len..];
        if payload.len() != 8 * expected {
            return Err(bad(format!(
                "payload holds {} bytes, layer dims need {}",
                payload.len(),
                8 * expected
            )));
        }
        let mut values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let mut layers = Vec::with_capacity(specs.len());
        for s in &specs {
            let w: Vec<f64> = values.by_ref().take(s.out_dim * s.in_dim).collect();
            let b: Vec<f64> = values.by_ref().take(s.out_dim).collect();
            layers.push(Layer {
                weights: Matrix::from_vec(s.out_dim, s.in_dim, w).map_err(|e| bad(e.to_string()))?,
                biases: b,
            });
        }
        let model = ModelParams::new(specs, layers).map_err(|e| bad(e.to_string()))?;
        if !header.classes.is_empty() && header.classes.len() != model.output_dim() {
            return Err(bad(format!(
                "{} class names for a {}-way output",
                header.classes.len(),
                model.output_dim()
            )));
        }
        Ok(Self {
            model,
            classes: header.classes,
            metadata: header.metadata,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Rejects a checkpoint whose input or output width differs from the data.
    pub fn expect_dims(&self, n_features: usize, n_classes: usize) -> Result<(), CliError> {
        let (i, o) = (self.model.input_dim(), self.model.output_dim());
        if i != n_features {
            return Err(CliError::Checkpoint(format!(
                "checkpoint expects {i} input features, the data has {n_features}"
            )));
        }
        if o != n_classes {
            return Err(CliError::Checkpoint(format!(
                "checkpoint predicts {o} classes, the data has {n_classes}"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fediron_core::nn::init_xavier;
    use fediron_core::ModelPreset;

    fn sample() -> Checkpoint {
        let model = init_xavier(&ModelPreset::Dnn.specs(5, 3), 1).unwrap();
        Checkpoint::new(model, vec!["a".into(), "b".into(), "c".into()]).with_meta("seed", 1)
    }

    #[test]
    fn bytes_round_trip() {
        let c = sample();
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut bytes = sample().to_bytes();
        bytes[0] = b'X';
        assert!(Checkpoint::from_bytes(&bytes).unwrap_err().to_string().contains("magic"));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let mut bytes = sample().to_bytes();
        bytes.truncate(bytes.len() - 8);
        assert!(Checkpoint::from_bytes(&bytes).is_err());
    }

    #[test]
    fn dim_check_names_both_sides() {
        let err = sample().expect_dims(7, 3).unwrap_err().to_string();
        assert!(err.contains('5') && err.contains('7'), "{err}");
    }
}
