//! Experiment configuration: one TOML file, then command-line overrides.

use std::path::{Path, PathBuf};

use fediron_core::fl::{
    DEFAULT_CLIENTS, DEFAULT_LOCAL_EPOCHS, DEFAULT_PROX_MU, DEFAULT_ROUNDS, DEFAULT_YOGI_BETA1, DEFAULT_YOGI_BETA2,
    DEFAULT_YOGI_ETA, DEFAULT_YOGI_TAU,
};
use fediron_core::dbn::CdConfig;
use fediron_core::nn::{OptimizerConfig, DEFAULT_BATCH_SIZE};
use fediron_core::synth::{
    self, SkewProfile, BENCH_AFFINITY, BENCH_MODES, BENCH_SEPARATION, DEFAULT_NOISE,
};
use fediron_core::{AggregationConfig, ModelPreset};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_PRETRAIN_EPOCHS: usize = 40;
/// Matches the federated budget of 50 rounds × 2 local epochs.
pub const DEFAULT_CENTRAL_EPOCHS: usize = 100;
pub const DEFAULT_SCALE: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggKind {
    FedAvg,
    FedProx,
    FedYogi,
}

impl std::str::FromStr for AggKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fedavg" => Ok(AggKind::FedAvg),
            "fedprox" => Ok(AggKind::FedProx),
            "fedyogi" => Ok(AggKind::FedYogi),
            other => Err(format!("unknown aggregation `{other}` (expected fedavg, fedprox or fedyogi)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    Random,
    Pretrained,
}

impl std::str::FromStr for InitKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(InitKind::Random),
            "pretrained" => Ok(InitKind::Pretrained),
            other => Err(format!("unknown init `{other}` (expected random or pretrained)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    /// Multi-modal classes with a class-skewed residual.
    Benchmark,
    /// One Gaussian per class, residual dealt round-robin.
    Ton10,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregationSettings {
    pub kind: AggKind,
    pub mu: f64,
    pub eta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub tau: f64,
}

impl Default for AggregationSettings {
    fn default() -> Self {
        Self {
            kind: AggKind::FedAvg,
            mu: DEFAULT_PROX_MU,
            eta: DEFAULT_YOGI_ETA,
            beta1: DEFAULT_YOGI_BETA1,
            beta2: DEFAULT_YOGI_BETA2,
            tau: DEFAULT_YOGI_TAU,
        }
    }
}

impl AggregationSettings {
    pub fn to_core(&self) -> AggregationConfig {
        match self.kind {
            AggKind::FedAvg => AggregationConfig::FedAvg,
            AggKind::FedProx => AggregationConfig::FedProx { mu: self.mu },
            AggKind::FedYogi => AggregationConfig::FedYogi {
                eta: self.eta,
                beta1: self.beta1,
                beta2: self.beta2,
                tau: self.tau,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    pub profile: SynthKind,
    pub scale: f64,
    pub modes: usize,
    pub separation: f64,
    pub noise: f64,
    pub residual_affinity: f64,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            profile: SynthKind::Benchmark,
            scale: DEFAULT_SCALE,
            modes: BENCH_MODES,
            separation: BENCH_SEPARATION,
            noise: DEFAULT_NOISE,
            residual_affinity: BENCH_AFFINITY,
        }
    }
}

impl SynthSettings {
    pub fn profile(&self) -> Result<SkewProfile, CliError> {
        let mut p = match self.profile {
            SynthKind::Benchmark => {
                synth::profile_ton10_modes(self.scale, self.separation, self.noise, self.modes)?
            }
            SynthKind::Ton10 => synth::profile_ton10_with(self.scale, self.separation, self.noise)?,
        };
        if self.profile == SynthKind::Benchmark {
            p.residual_affinity = self.residual_affinity;
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub model: ModelPreset,
    pub rounds: usize,
    /// Local epochs per round.
    pub epochs: usize,
    pub clients: usize,
    pub batch_size: usize,
    /// Supervised learning rate; the preset's default when absent.
    pub lr: Option<f64>,
    pub init: InitKind,
    pub pretrain_epochs: usize,
    pub central_epochs: usize,
    pub cd_epochs: usize,
    pub cd_lr: f64,
    pub serial: bool,
    pub no_timestamps: bool,
    pub out: PathBuf,
    /// Prepared dataset directory for training and evaluation.
    pub data: Option<PathBuf>,
    /// Input checkpoint: the initial model for `init = pretrained`, the model
    /// to score for `evaluate`.
    pub checkpoint: Option<PathBuf>,
    pub aggregation: AggregationSettings,
    pub synth: SynthSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let cd = CdConfig::default();
        Self {
            seed: DEFAULT_SEED,
            model: ModelPreset::Dnn,
            rounds: DEFAULT_ROUNDS,
            epochs: DEFAULT_LOCAL_EPOCHS,
            clients: DEFAULT_CLIENTS,
            batch_size: DEFAULT_BATCH_SIZE,
            lr: None,
            init: InitKind::Random,
            pretrain_epochs: DEFAULT_PRETRAIN_EPOCHS,
            central_epochs: DEFAULT_CENTRAL_EPOCHS,
            cd_epochs: cd.epochs,
            cd_lr: cd.lr,
            serial: false,
            no_timestamps: false,
            out: PathBuf::from("out"),
            data: None,
            checkpoint: None,
            aggregation: AggregationSettings::default(),
            synth: SynthSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(s).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.clients == 0 {
            return bad("clients must be at least 1");
        }
        if let Some(lr) = self.lr {
            if !(lr.is_finite() && lr > 0.0) {
                return bad("lr must be positive");
            }
        }
        if !(self.cd_lr.is_finite() && self.cd_lr >= 0.0) {
            return bad("cd_lr must be >= 0");
        }
        self.aggregation
            .to_core()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        let base = self.model.default_optimizer();
        match self.lr {
            Some(lr) => base.with_lr(lr),
            None => base,
        }
    }

    pub fn cd(&self) -> CdConfig {
        CdConfig {
            epochs: self.cd_epochs,
            lr: self.cd_lr,
            batch_size: self.batch_size,
            ..CdConfig::default()
        }
    }

    pub fn timestamps(&self) -> bool {
        !self.no_timestamps
    }
}
