use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{loss_and_grad, ModelParams, Prox};
use super::{Matrix, NnError};

pub const DEFAULT_SGD_LR: f64 = 0.01;
pub const DEFAULT_ADAM_LR: f64 = 0.001;
pub const DEFAULT_MOMENTUM: f64 = 0.9;
pub const DEFAULT_BATCH_SIZE: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerConfig {
    Sgd {
        lr: f64,
        momentum: f64,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl OptimizerConfig {
    pub fn sgd(lr: f64) -> Self {
        OptimizerConfig::Sgd {
            lr,
            momentum: DEFAULT_MOMENTUM,
        }
    }

    pub fn adam(lr: f64) -> Self {
        OptimizerConfig::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerConfig::Sgd { lr, .. } | OptimizerConfig::Adam { lr, .. } => lr,
        }
    }

    pub fn with_lr(self, lr: f64) -> Self {
        match self {
            OptimizerConfig::Sgd { momentum, .. } => OptimizerConfig::Sgd { lr, momentum },
            OptimizerConfig::Adam {
                beta1, beta2, eps, ..
            } => OptimizerConfig::Adam {
                lr,
                beta1,
                beta2,
                eps,
            },
        }
    }

    fn validate(&self) -> Result<(), NnError> {
        let lr = self.lr();
        if !(lr.is_finite() && lr >= 0.0) {
            return Err(NnError::Config(format!("learning rate must be finite and >= 0, got {lr}")));
        }
        Ok(())
    }
}

/// Optimizer state for one training run.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd {
        lr: f64,
        momentum: f64,
        velocity: Vec<Vec<f64>>,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        step: i32,
        m: Vec<Vec<f64>>,
        v: Vec<Vec<f64>>,
    },
}

impl Optimizer {
    pub fn new(config: &OptimizerConfig, params: &ModelParams) -> Self {
        let zeros = || params.tensors().map(|t| vec![0.0; t.len()]).collect::<Vec<_>>();
        match *config {
            OptimizerConfig::Sgd { lr, momentum } => Optimizer::Sgd {
                lr,
                momentum,
                velocity: zeros(),
            },
            OptimizerConfig::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => Optimizer::Adam {
                lr,
                beta1,
                beta2,
                eps,
                step: 0,
                m: zeros(),
                v: zeros(),
            },
        }
    }

    /// Applies one update in place.
    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams) -> Result<(), NnError> {
        if !params.same_shape(grads) {
            return Err(NnError::Shape("gradient shape differs from parameters".into()));
        }
        match self {
            Optimizer::Sgd {
                lr,
                momentum,
                velocity,
            } => {
                for ((w, g), vel) in params.tensors_mut().zip(grads.tensors()).zip(velocity.iter_mut()) {
                    for ((wi, gi), vi) in w.iter_mut().zip(g).zip(vel.iter_mut()) {
                        *vi = *momentum * *vi + gi;
                        *wi -= *lr * *vi;
                    }
                }
            }
            Optimizer::Adam {
                lr,
                beta1,
                beta2,
                eps,
                step,
                m,
                v,
            } => {
                *step += 1;
                let c1 = 1.0 - beta1.powi(*step);
                let c2 = 1.0 - beta2.powi(*step);
                for (((w, g), mt), vt) in params
                    .tensors_mut()
                    .zip(grads.tensors())
                    .zip(m.iter_mut())
                    .zip(v.iter_mut())
                {
                    for (((wi, gi), mi), vi) in w.iter_mut().zip(g).zip(mt.iter_mut()).zip(vt.iter_mut()) {
                        *mi = *beta1 * *mi + (1.0 - *beta1) * gi;
                        *vi = *beta2 * *vi + (1.0 - *beta2) * gi * gi;
                        let m_hat = *mi / c1;
                        let v_hat = *vi / c2;
                        *wi -= *lr * m_hat / (v_hat.sqrt() + *eps);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Labelled samples: one feature row per label.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<usize>,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<usize>) -> Result<Self, NnError> {
        if x.rows() != y.len() {
            return Err(NnError::Shape(format!(
                "{} feature rows but {} labels",
                x.rows(),
                y.len()
            )));
        }
        Ok(Self { x, y })
    }

    pub fn empty(n_features: usize) -> Self {
        Self {
            x: Matrix::zeros(0, n_features),
            y: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
        }
    }

    /// Concatenates datasets in order.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a Dataset>) -> Result<Self, NnError> {
        let parts: Vec<&Dataset> = parts.into_iter().collect();
        let xs: Vec<&Matrix> = parts.iter().map(|d| &d.x).collect();
        let x = Matrix::vstack(&xs)?;
        let y = parts.iter().flat_map(|d| d.y.iter().copied()).collect();
        Ok(Self { x, y })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub prox: Option<Prox>,
}

impl TrainConfig {
    pub fn new(optimizer: OptimizerConfig, epochs: usize, seed: u64) -> Self {
        Self {
            optimizer,
            batch_size: DEFAULT_BATCH_SIZE,
            epochs,
            seed,
            prox: None,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        self.optimizer.validate()?;
        if self.batch_size == 0 {
            return Err(NnError::Config("batch size must be at least 1".into()));
        }
        if let Some(p) = &self.prox {
            if !(p.mu.is_finite() && p.mu >= 0.0) {
                return Err(NnError::Config(format!("proximal mu must be >= 0, got {}", p.mu)));
            }
        }
        Ok(())
    }
}

/// Mini-batch training over seeded shuffles. Returns the trained model and
/// the mean training loss of each epoch.
pub fn train_local(
    model: &ModelParams,
    data: &Dataset,
    config: &TrainConfig,
) -> Result<(ModelParams, Vec<f64>), NnError> {
    config.validate()?;
    if data.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    if data.n_features() != model.input_dim() {
        return Err(NnError::Shape(format!(
            "dataset has {} features, model expects {}",
            data.n_features(),
            model.input_dim()
        )));
    }
    let mut params = model.clone();
    let mut opt = Optimizer::new(&config.optimizer, &params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch = data.select(chunk);
            let (loss, grads) = loss_and_grad(&params, &batch.x, &batch.y, config.prox.as_ref())?;
            total += loss * chunk.len() as f64;
            opt.step(&mut params, &grads)?;
        }
        curve.push(total / data.len() as f64);
    }
    Ok((params, curve))
}
