//! In-process federated training: broadcast, local training, aggregation
//! (FedAvg, FedProx, FedYogi), optional server-side pretraining, and
//! per-round history.
//!
//! Clients always send full parameters. Aggregation walks updates in
//! `client_id` order so the result never depends on arrival order or on how
//! many clients trained in parallel.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dbn::{pretrain_stack, to_classifier, CdConfig};
use crate::flow::PreparedDataset;
use crate::metrics::{ConfusionMatrix, MetricsError, MetricsReport};
use crate::nn::{
    forward, argmax_rows, init_xavier, train_local, Dataset, ModelParams, ModelPreset, NnError, OptimizerConfig, Prox,
    TrainConfig, DEFAULT_BATCH_SIZE,
};
use crate::seed::{client_round_seed, derive_seed};

pub const DEFAULT_PROX_MU: f64 = 0.01;
pub const DEFAULT_YOGI_ETA: f64 = 0.01;
pub const DEFAULT_YOGI_BETA1: f64 = 0.9;
pub const DEFAULT_YOGI_BETA2: f64 = 0.99;
pub const DEFAULT_YOGI_TAU: f64 = 1e-3;
pub const DEFAULT_ROUNDS: usize = 50;
pub const DEFAULT_LOCAL_EPOCHS: usize = 2;
pub const DEFAULT_CLIENTS: usize = 10;

#[derive(Debug, Error)]
pub enum FlError {
    #[error("no client updates to aggregate")]
    NoUpdates,
    #[error("no clients to train")]
    NoClients,
    #[error("client {0} sent parameters of a different shape than the global model")]
    ShapeMismatch(usize),
    #[error("client {0} appears more than once")]
    DuplicateClient(usize),
    #[error("client {0} has no training samples")]
    EmptyClient(usize),
    #[error("invalid aggregation settings: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AggregationConfig {
    FedAvg,
    FedProx { mu: f64 },
    FedYogi { eta: f64, beta1: f64, beta2: f64, tau: f64 },
}

impl AggregationConfig {
    pub fn fedprox() -> Self {
        AggregationConfig::FedProx { mu: DEFAULT_PROX_MU }
    }

    pub fn fedyogi() -> Self {
        AggregationConfig::FedYogi {
            eta: DEFAULT_YOGI_ETA,
            beta1: DEFAULT_YOGI_BETA1,
            beta2: DEFAULT_YOGI_BETA2,
            tau: DEFAULT_YOGI_TAU,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AggregationConfig::FedAvg => "fedavg",
            AggregationConfig::FedProx { .. } => "fedprox",
            AggregationConfig::FedYogi { .. } => "fedyogi",
        }
    }

    pub fn validate(&self) -> Result<(), FlError> {
        match *self {
            AggregationConfig::FedAvg => Ok(()),
            AggregationConfig::FedProx { mu } => {
                if mu.is_finite() && mu >= 0.0 {
                    Ok(())
                } else {
                    Err(FlError::Config(format!("mu must be finite and >= 0, got {mu}")))
                }
            }
            AggregationConfig::FedYogi { eta, beta1, beta2, tau } => {
                if ![eta, beta1, beta2, tau].iter().all(|v| v.is_finite()) {
                    Err(FlError::Config("yogi hyperparameters must be finite".into()))
                } else if tau <= 0.0 {
                    Err(FlError::Config(format!("tau must be > 0, got {tau}")))
                } else {
                    Ok(())
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client_id: usize,
    pub params: ModelParams,
    /// Training-set size; the aggregation weight.
    pub n_samples: usize,
}

/// Updates ordered by client id, rejecting duplicates and empty clients.
fn ordered(updates: &[ClientUpdate]) -> Result<Vec<&ClientUpdate>, FlError> {
    if updates.is_empty() {
        return Err(FlError::NoUpdates);
    }
    let mut sorted: Vec<&ClientUpdate> = updates.iter().collect();
    sorted.sort_by_key(|u| u.client_id);
    for w in sorted.windows(2) {
        if w[0].client_id == w[1].client_id {
            return Err(FlError::DuplicateClient(w[0].client_id));
        }
    }
    let reference = &sorted[0].params;
    for u in &sorted {
        if u.n_samples == 0 {
            return Err(FlError::EmptyClient(u.client_id));
        }
        if !u.params.same_shape(reference) {
            return Err(FlError::ShapeMismatch(u.client_id));
        }
    }
    Ok(sorted)
}

/// `n_i / Σ n`, in client-id order.
pub fn aggregation_weights(updates: &[ClientUpdate]) -> Result<Vec<f64>, FlError> {
    let sorted = ordered(updates)?;
    let total: usize = sorted.iter().map(|u| u.n_samples).sum();
    Ok(sorted.iter().map(|u| u.n_samples as f64 / total as f64).collect())
}

/// Sample-weighted elementwise mean of the client parameters.
pub fn aggregate_fedavg(updates: &[ClientUpdate]) -> Result<ModelParams, FlError> {
    let sorted = ordered(updates)?;
    let weights = aggregation_weights(updates)?;
    if sorted.len() == 1 {
        return Ok(sorted[0].params.clone());
    }
    let mut out = sorted[0].params.zeros_like();
    for (u, w) in sorted.iter().zip(&weights) {
        for (acc, p) in out.tensors_mut().zip(u.params.tensors()) {
            for (a, x) in acc.iter_mut().zip(p) {
                *a += w * x;
            }
        }
    }
    Ok(out)
}

/// Weighted mean client delta `Σ (n_i/n)(w_i − x)`.
fn mean_delta(global: &ModelParams, updates: &[ClientUpdate]) -> Result<ModelParams, FlError> {
    let sorted = ordered(updates)?;
    if let Some(u) = sorted.iter().find(|u| !u.params.same_shape(global)) {
        return Err(FlError::ShapeMismatch(u.client_id));
    }
    let weights = aggregation_weights(updates)?;
    let mut delta = global.zeros_like();
    for (u, w) in sorted.iter().zip(&weights) {
        for ((d, p), x) in delta.tensors_mut().zip(u.params.tensors()).zip(global.tensors()) {
            for ((di, pi), xi) in d.iter_mut().zip(p).zip(x) {
                *di += w * (pi - xi);
            }
        }
    }
    Ok(delta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct YogiMoments {
    pub m: ModelParams,
    pub v: ModelParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    pub global: ModelParams,
    /// Present iff the aggregation is FedYogi.
    pub yogi: Option<YogiMoments>,
    pub round: usize,
}

impl ServerState {
    pub fn new(global: ModelParams, agg: &AggregationConfig) -> Self {
        let yogi = match *agg {
            AggregationConfig::FedYogi { tau, .. } => {
                let mut v = global.zeros_like();
                for t in v.tensors_mut() {
                    t.fill(tau * tau);
                }
                Some(YogiMoments {
                    m: global.zeros_like(),
                    v,
                })
            }
            _ => None,
        };
        Self { global, yogi, round: 0 }
    }

    /// Folds one round of updates into the global model.
    pub fn apply(&mut self, agg: &AggregationConfig, updates: &[ClientUpdate]) -> Result<(), FlError> {
        match *agg {
            AggregationConfig::FedAvg | AggregationConfig::FedProx { .. } => {
                let next = aggregate_fedavg(updates)?;
                if !next.same_shape(&self.global) {
                    return Err(FlError::ShapeMismatch(updates[0].client_id));
                }
                self.global = next;
                self.round += 1;
            }
            AggregationConfig::FedYogi { eta, beta1, beta2, tau } => {
                self.yogi_step(updates, eta, beta1, beta2, tau)?;
            }
        }
        Ok(())
    }

    fn yogi_step(&mut self, updates: &[ClientUpdate], eta: f64, beta1: f64, beta2: f64, tau: f64) -> Result<(), FlError> {
        let delta = mean_delta(&self.global, updates)?;
        let global = &mut self.global;
        let YogiMoments { m, v } = self.yogi.get_or_insert_with(|| {
            let mut v = global.zeros_like();
            for t in v.tensors_mut() {
                t.fill(tau * tau);
            }
            YogiMoments {
                m: global.zeros_like(),
                v,
            }
        });
        for (((x, d), mt), vt) in global
            .tensors_mut()
            .zip(delta.tensors())
            .zip(m.tensors_mut())
            .zip(v.tensors_mut())
        {
            for (((xi, &di), mi), vi) in x.iter_mut().zip(d).zip(mt.iter_mut()).zip(vt.iter_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * di;
                let d2 = di * di;
                *vi -= (1.0 - beta2) * d2 * sign(*vi - d2);
                *xi += eta * *mi / (vi.sqrt() + tau);
            }
        }
        self.round += 1;
        Ok(())
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Server-side Yogi step on the weighted mean client delta:
/// `m ← β₁m + (1−β₁)Δ`, `v ← v − (1−β₂)Δ²·sign(v − Δ²)`, `x ← x + η·m/(√v + τ)`.
pub fn aggregate_fedyogi(
    mut state: ServerState,
    updates: &[ClientUpdate],
    eta: f64,
    beta1: f64,
    beta2: f64,
    tau: f64,
) -> Result<ServerState, FlError> {
    state.yogi_step(updates, eta, beta1, beta2, tau)?;
    Ok(state)
}

/// Client-side training settings shared by every client.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalConfig {
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub epochs: usize,
}

impl LocalConfig {
    pub fn for_preset(preset: ModelPreset) -> Self {
        Self {
            optimizer: preset.default_optimizer(),
            batch_size: DEFAULT_BATCH_SIZE,
            epochs: DEFAULT_LOCAL_EPOCHS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub aggregation: AggregationConfig,
    pub rounds: usize,
    pub local: LocalConfig,
    pub master_seed: u64,
    pub eval_each_round: bool,
    /// Train clients on the rayon pool; output is identical either way.
    pub parallel: bool,
    pub record_timing: bool,
}

impl RunConfig {
    pub fn new(aggregation: AggregationConfig, local: LocalConfig, master_seed: u64) -> Self {
        Self {
            aggregation,
            rounds: DEFAULT_ROUNDS,
            local,
            master_seed,
            eval_each_round: true,
            parallel: true,
            record_timing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientLoss {
    pub client_id: usize,
    pub n_samples: usize,
    /// Mean training loss of the final local epoch.
    pub loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub clients: Vec<ClientLoss>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub metrics: Option<MetricsReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_time_secs: Option<f64>,
}

/// Metrics of `model` over the concatenation of the given datasets.
pub fn evaluate<'a>(
    model: &ModelParams,
    datasets: impl IntoIterator<Item = &'a Dataset>,
) -> Result<MetricsReport, FlError> {
    let n_classes = model.output_dim();
    let mut cm = ConfusionMatrix::new(n_classes);
    for d in datasets {
        if d.is_empty() {
            continue;
        }
        let preds = argmax_rows(forward(model, &d.x)?.output());
        cm.merge(&crate::metrics::confusion(&preds, &d.y, n_classes)?);
    }
    Ok(MetricsReport::from_confusion(cm)?)
}

fn train_client(
    global: &ModelParams,
    client: &PreparedDataset,
    cfg: &RunConfig,
    round: usize,
) -> Result<(ClientUpdate, ClientLoss), FlError> {
    let prox = match cfg.aggregation {
        AggregationConfig::FedProx { mu } => Some(Prox {
            mu,
            anchor: global.clone(),
        }),
        _ => None,
    };
    let train_cfg = TrainConfig {
        optimizer: cfg.local.optimizer,
        batch_size: cfg.local.batch_size,
        epochs: cfg.local.epochs,
        seed: client_round_seed(cfg.master_seed, client.client_id, round),
        prox,
    };
    let (params, curve) = train_local(global, &client.train, &train_cfg)?;
    let n = client.train.len();
    Ok((
        ClientUpdate {
            client_id: client.client_id,
            params,
            n_samples: n,
        },
        ClientLoss {
            client_id: client.client_id,
            n_samples: n,
            loss: curve.last().copied(),
        },
    ))
}

/// Runs `cfg.rounds` rounds with full participation. Evaluation (when
/// enabled) uses the union of every client's test split.
pub fn run_rounds(
    clients: &[PreparedDataset],
    init: ModelParams,
    cfg: &RunConfig,
) -> Result<(ModelParams, Vec<RoundReport>), FlError> {
    cfg.aggregation.validate()?;
    if clients.is_empty() {
        return Err(FlError::NoClients);
    }
    if let Some(c) = clients.iter().find(|c| c.train.is_empty()) {
        return Err(FlError::EmptyClient(c.client_id));
    }
    let mut ids: Vec<usize> = clients.iter().map(|c| c.client_id).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(FlError::DuplicateClient(w[0]));
    }
    let mut state = ServerState::new(init, &cfg.aggregation);
    let mut history = Vec::with_capacity(cfg.rounds);
    for round in 1..=cfg.rounds {
        let start = Instant::now();
        let results: Vec<Result<(ClientUpdate, ClientLoss), FlError>> = if cfg.parallel {
            clients
                .par_iter()
                .map(|c| train_client(&state.global, c, cfg, round))
                .collect()
        } else {
            clients.iter().map(|c| train_client(&state.global, c, cfg, round)).collect()
        };
        let mut updates = Vec::with_capacity(clients.len());
        let mut losses = Vec::with_capacity(clients.len());
        for r in results {
            let (u, l) = r?;
            updates.push(u);
            losses.push(l);
        }
        losses.sort_by_key(|l| l.client_id);
        state.apply(&cfg.aggregation, &updates)?;
        let metrics = if cfg.eval_each_round {
            Some(evaluate(&state.global, clients.iter().map(|c| &c.test))?)
        } else {
            None
        };
        history.push(RoundReport {
            round,
            clients: losses,
            metrics,
            wall_time_secs: cfg.record_timing.then(|| start.elapsed().as_secs_f64()),
        });
    }
    Ok((state.global, history))
}

/// Settings for centralised training on the server's residual pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub epochs: usize,
    /// Contrastive-divergence phase, used by the DBN preset only.
    pub cd: CdConfig,
    pub seed: u64,
}

impl PretrainConfig {
    pub fn for_preset(preset: ModelPreset, epochs: usize, seed: u64) -> Self {
        Self {
            optimizer: preset.default_optimizer(),
            batch_size: DEFAULT_BATCH_SIZE,
            epochs,
            cd: CdConfig::default(),
            seed,
        }
    }
}

/// Initial global parameters for a preset: Xavier weights, or for the DBN a
/// fresh stack unrolled into a classifier.
pub fn initial_model(preset: ModelPreset, n_features: usize, n_classes: usize, seed: u64) -> Result<ModelParams, FlError> {
    Ok(init_xavier(&preset.specs(n_features, n_classes), seed)?)
}

/// Trains `preset` centrally. For the DBN this is greedy CD pretraining
/// followed by supervised fine-tuning; for the DNN, supervised training from
/// Xavier initialisation. Returns the parameters and the supervised loss curve.
pub fn pretrain_global(
    data: &Dataset,
    preset: ModelPreset,
    n_classes: usize,
    cfg: &PretrainConfig,
) -> Result<(ModelParams, Vec<f64>), FlError> {
    if data.is_empty() {
        return Err(FlError::Nn(NnError::EmptyDataset));
    }
    let n_features = data.n_features();
    let start = match preset {
        ModelPreset::Dnn => initial_model(preset, n_features, n_classes, cfg.seed)?,
        ModelPreset::Dbn => {
            let widths = &preset.widths(n_features, n_classes);
            let stack_widths = &widths[..widths.len() - 1];
            let (stack, _) = pretrain_stack(stack_widths, &data.x, &cfg.cd, derive_seed(cfg.seed, &[0xDB]))?;
            to_classifier(&stack, n_classes, derive_seed(cfg.seed, &[0x4EAD]))?
        }
    };
    let train_cfg = TrainConfig {
        optimizer: cfg.optimizer,
        batch_size: cfg.batch_size,
        epochs: cfg.epochs,
        seed: derive_seed(cfg.seed, &[0x7EA1]),
        prox: None,
    };
    Ok(train_local(&start, data, &train_cfg)?)
}
