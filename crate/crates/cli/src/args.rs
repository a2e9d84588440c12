//! Command-line parsing. Flags override values from `--config`.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use fediron_core::ModelPreset;

use crate::commands::{self, Split};
use crate::config::{AggKind, ExperimentConfig, InitKind};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "fediron", version, about = "Federated intrusion-detection experiments on flow data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean a TON-IoT flow CSV and split it into per-destination-IP clients.
    Partition {
        /// Flow CSV in the TON-IoT network layout.
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Generate the synthetic ten-client dataset.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Fraction of the reference counts to generate.
        #[arg(long)]
        scale: Option<f64>,
    },
    /// Train on the union of all client training splits.
    TrainCentral {
        #[command(flatten)]
        common: Common,
    },
    /// Train on the server's residual pool.
    Pretrain {
        #[command(flatten)]
        common: Common,
    },
    /// Federated training across the clients.
    TrainFl {
        #[command(flatten)]
        common: Common,
    },
    /// Score a checkpoint on a prepared dataset.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Merge run directories into curves.csv and summary.json.
    Report {
        #[command(flatten)]
        common: Common,
        /// Run directories holding report.json (and history.json for FL runs).
        #[arg(long = "run", required = true)]
        runs: Vec<PathBuf>,
    },
}

#[derive(Debug, Default, Args)]
pub struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Prepared dataset directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Input checkpoint (pretrained init, or the model to evaluate).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<ModelPreset>,
    #[arg(long)]
    pub agg: Option<AggKind>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Local epochs per round (federated) or training epochs (centralised,
    /// pretraining).
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub clients: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub init: Option<InitKind>,
    /// Train clients one after another instead of on the thread pool.
    #[arg(long)]
    pub serial: bool,
    /// Leave wall-clock times and creation stamps out of every output.
    #[arg(long)]
    pub no_timestamps: bool,
}

/// Which config field `--epochs` sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpochTarget {
    Local,
    Central,
    Pretrain,
}

impl Common {
    /// The file configuration (or defaults) with every given flag applied.
    pub fn resolve(&self, epochs: EpochTarget) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if let Some(v) = &self.data {
            cfg.data = Some(v.clone());
        }
        if let Some(v) = &self.checkpoint {
            cfg.checkpoint = Some(v.clone());
        }
        if let Some(v) = self.model {
            cfg.model = v;
        }
        if let Some(v) = self.agg {
            cfg.aggregation.kind = v;
        }
        if let Some(v) = self.mu {
            cfg.aggregation.mu = v;
        }
        if let Some(v) = self.rounds {
            cfg.rounds = v;
        }
        if let Some(v) = self.epochs {
            match epochs {
                EpochTarget::Local => cfg.epochs = v,
                EpochTarget::Central => cfg.central_epochs = v,
                EpochTarget::Pretrain => cfg.pretrain_epochs = v,
            }
        }
        if let Some(v) = self.clients {
            cfg.clients = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.lr {
            cfg.lr = Some(v);
        }
        if let Some(v) = self.init {
            cfg.init = v;
        }
        cfg.serial |= self.serial;
        cfg.no_timestamps |= self.no_timestamps;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn f1_line(r: &commands::RunReport) -> String {
    format!(
        "{} {}: weighted F1 {:.4}, accuracy {:.4}",
        r.command, r.model, r.metrics.weighted.f1, r.metrics.accuracy
    )
}

/// Runs a parsed command and returns a one-line summary for stdout.
pub fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Partition { input, common } => {
            let cfg = common.resolve(EpochTarget::Local)?;
            let m = commands::cmd_partition(&cfg, &input)?;
            Ok(format!("{} clients written to {}", m.clients.len(), cfg.out.display()))
        }
        Command::Synth { common, scale } => {
            let mut cfg = common.resolve(EpochTarget::Local)?;
            if let Some(s) = scale {
                cfg.synth.scale = s;
            }
            let m = commands::cmd_synth(&cfg)?;
            let total: u64 = m.clients.iter().map(|c| c.total).sum();
            Ok(format!("{} clients ({total} records) written to {}", m.clients.len(), cfg.out.display()))
        }
        Command::TrainCentral { common } => {
            let cfg = common.resolve(EpochTarget::Central)?;
            Ok(f1_line(&commands::cmd_train_central(&cfg)?))
        }
        Command::Pretrain { common } => {
            let cfg = common.resolve(EpochTarget::Pretrain)?;
            Ok(f1_line(&commands::cmd_pretrain(&cfg)?))
        }
        Command::TrainFl { common } => {
            let cfg = common.resolve(EpochTarget::Local)?;
            Ok(f1_line(&commands::cmd_train_fl(&cfg)?))
        }
        Command::Evaluate { common, split } => {
            let cfg = common.resolve(EpochTarget::Local)?;
            let r = commands::cmd_evaluate(&cfg, split)?;
            Ok(serde_json::to_string_pretty(&r.metrics).expect("metrics serialize"))
        }
        Command::Report { common, runs } => {
            let cfg = common.resolve(EpochTarget::Local)?;
            let s = commands::cmd_report(&cfg, &runs)?;
            Ok(format!("{} runs summarised in {}", s.len(), cfg.out.display()))
        }
    }
}
