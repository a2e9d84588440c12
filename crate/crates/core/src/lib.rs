//! Federated-learning intrusion detection on network-flow data.
//!
//! The crate covers the whole pipeline: flow ingestion and per-client
//! preparation ([`flow`]), a synthetic stand-in dataset ([`synth`]), a dense
//! network engine ([`nn`]), deep belief networks ([`dbn`]), federated
//! orchestration ([`fl`]) and weighted multi-class metrics ([`metrics`]).

pub mod dbn;
pub mod fl;
pub mod flow;
pub mod metrics;
pub mod nn;
pub mod seed;
pub mod synth;

pub use fl::{AggregationConfig, ClientUpdate, RoundReport, RunConfig};
pub use flow::{ClientPartition, FeatureSchema, FlowRecord, LabelIndex, PreparedDataset, RawDataset};
pub use metrics::{ConfusionMatrix, MetricsReport};
pub use nn::{Dataset, Matrix, ModelParams, ModelPreset};
