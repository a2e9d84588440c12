//! Library side of the `fediron` command: configuration, checkpoint and
//! prepared-dataset formats, and the subcommands themselves.

pub mod args;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod prepared;

pub use checkpoint::Checkpoint;
pub use commands::{RunReport, RunSummary, Split};
pub use config::ExperimentConfig;
pub use error::CliError;
pub use fediron_core::{AggregationConfig, MetricsReport, ModelPreset, RoundReport};

/// JSON schema that every `report.json` satisfies.
pub const REPORT_SCHEMA: &str = include_str!("../schemas/report.schema.json");
