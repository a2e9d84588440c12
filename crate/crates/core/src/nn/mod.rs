//! Dense neural-network engine in double precision: matrices, MLP
//! forward/backward with fused softmax cross-entropy, SGD/Adam, and seeded
//! mini-batch training.

mod matrix;
mod model;
mod train;

use thiserror::Error;

pub use matrix::Matrix;
pub use model::{
    argmax_rows, backward, chain_specs, cross_entropy, forward, init_xavier, layer_forward,
    loss_and_grad, sigmoid, softmax_rows, validate_specs, Activation, ForwardPass, Layer,
    LayerSpec, ModelParams, Prox, PROB_FLOOR,
};
pub(crate) use model::fill_xavier;
pub use train::{
    train_local, Dataset, Optimizer, OptimizerConfig, TrainConfig, DEFAULT_ADAM_LR,
    DEFAULT_BATCH_SIZE, DEFAULT_MOMENTUM, DEFAULT_SGD_LR,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid model: {0}")]
    InvalidSpec(String),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("label {label} is out of range for {n_classes} classes")]
    Label { label: usize, n_classes: usize },
    #[error("cannot train on an empty dataset")]
    EmptyDataset,
}

/// The two architectures used in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelPreset {
    Dnn,
    Dbn,
}

impl ModelPreset {
    pub const DNN_HIDDEN: [usize; 3] = [128, 128, 64];
    pub const DBN_HIDDEN: [usize; 4] = [100, 150, 200, 50];

    pub fn name(self) -> &'static str {
        match self {
            ModelPreset::Dnn => "dnn",
            ModelPreset::Dbn => "dbn",
        }
    }

    pub fn hidden(self) -> &'static [usize] {
        match self {
            ModelPreset::Dnn => &Self::DNN_HIDDEN,
            ModelPreset::Dbn => &Self::DBN_HIDDEN,
        }
    }

    /// Hidden activation: ReLU for the DNN; sigmoid for the DBN so the
    /// fine-tuned network computes the same hidden probabilities as its RBMs.
    pub fn hidden_activation(self) -> Activation {
        match self {
            ModelPreset::Dnn => Activation::Relu,
            ModelPreset::Dbn => Activation::Sigmoid,
        }
    }

    pub fn widths(self, n_features: usize, n_classes: usize) -> Vec<usize> {
        let mut w = vec![n_features];
        w.extend_from_slice(self.hidden());
        w.push(n_classes);
        w
    }

    pub fn specs(self, n_features: usize, n_classes: usize) -> Vec<LayerSpec> {
        chain_specs(&self.widths(n_features, n_classes), self.hidden_activation())
    }

    /// Supervised optimizer: SGD for the DNN, Adam for DBN fine-tuning.
    pub fn default_optimizer(self) -> OptimizerConfig {
        match self {
            ModelPreset::Dnn => OptimizerConfig::sgd(DEFAULT_SGD_LR),
            ModelPreset::Dbn => OptimizerConfig::adam(DEFAULT_ADAM_LR),
        }
    }
}

impl std::str::FromStr for ModelPreset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dnn" => Ok(ModelPreset::Dnn),
            "dbn" => Ok(ModelPreset::Dbn),
            other => Err(format!("unknown model preset `{other}` (expected dnn or dbn)")),
        }
    }
}

impl std::fmt::Display for ModelPreset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
