//! Deep belief networks: restricted Boltzmann machines trained greedily with
//! one-step contrastive divergence, then unrolled into a feedforward
//! classifier for supervised fine-tuning.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{
    fill_xavier, init_xavier, sigmoid, Activation, Layer, LayerSpec, Matrix, ModelParams, NnError,
    DEFAULT_BATCH_SIZE, DEFAULT_MOMENTUM,
};
use crate::seed::derive_seed;

pub const DEFAULT_CD_LR: f64 = 0.01;
pub const DEFAULT_CD_EPOCHS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VisibleKind {
    /// Unit-variance Gaussian visibles with mean-field reconstruction.
    Gaussian,
    Bernoulli,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rbm {
    /// `hidden × visible`
    pub weights: Matrix,
    pub visible_bias: Vec<f64>,
    pub hidden_bias: Vec<f64>,
    pub visible_kind: VisibleKind,
}

/// Momentum buffers for CD updates, shaped like the RBM parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CdVelocity {
    pub weights: Matrix,
    pub visible_bias: Vec<f64>,
    pub hidden_bias: Vec<f64>,
}

impl CdVelocity {
    pub fn zeros(rbm: &Rbm) -> Self {
        Self {
            weights: Matrix::zeros(rbm.n_hidden(), rbm.n_visible()),
            visible_bias: vec![0.0; rbm.n_visible()],
            hidden_bias: vec![0.0; rbm.n_hidden()],
        }
    }
}

impl Rbm {
    /// Xavier weights, zero biases.
    pub fn new(n_visible: usize, n_hidden: usize, visible_kind: VisibleKind, seed: u64) -> Self {
        let mut weights = Matrix::zeros(n_hidden, n_visible);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        fill_xavier(&mut weights, n_visible, n_hidden, &mut rng);
        Self {
            weights,
            visible_bias: vec![0.0; n_visible],
            hidden_bias: vec![0.0; n_hidden],
            visible_kind,
        }
    }

    pub fn n_visible(&self) -> usize {
        self.weights.cols()
    }

    pub fn n_hidden(&self) -> usize {
        self.weights.rows()
    }

    /// `p(h = 1 | v) = sigmoid(v Wᵀ + b_h)`
    pub fn hidden_probs(&self, v: &Matrix) -> Result<Matrix, NnError> {
        if v.cols() != self.n_visible() {
            return Err(NnError::Shape(format!(
                "RBM has {} visible units, batch has {} columns",
                self.n_visible(),
                v.cols()
            )));
        }
        let mut h = v.matmul_t(&self.weights)?;
        h.add_row_vector(&self.hidden_bias);
        h.map_inplace(sigmoid);
        Ok(h)
    }

    /// Mean of the visibles given hidden states: `h W + b_v`, squashed for
    /// Bernoulli units.
    pub fn visible_means(&self, h: &Matrix) -> Result<Matrix, NnError> {
        let mut v = h.matmul(&self.weights)?;
        v.add_row_vector(&self.visible_bias);
        if self.visible_kind == VisibleKind::Bernoulli {
            v.map_inplace(sigmoid);
        }
        Ok(v)
    }

    /// One CD-1 step on `batch`; returns the mean squared reconstruction error.
    ///
    /// Positive statistics use `p(h|v)`; the negative phase samples binary
    /// hiddens, reconstructs visibles (mean-field for Gaussian, sampled for
    /// Bernoulli) and uses `p(h|v')`. Parameters move by `lr · velocity`
    /// after `velocity ← momentum · velocity + gradient`.
    pub fn cd1_update(
        &mut self,
        batch: &Matrix,
        lr: f64,
        momentum: f64,
        velocity: &mut CdVelocity,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64, NnError> {
        let n = batch.rows();
        if n == 0 {
            return Ok(0.0);
        }
        let pos_h = self.hidden_probs(batch)?;
        let mut h_sample = pos_h.clone();
        h_sample.map_inplace(|p| if rng.random::<f64>() < p { 1.0 } else { 0.0 });
        let mut recon = self.visible_means(&h_sample)?;
        if self.visible_kind == VisibleKind::Bernoulli {
            recon.map_inplace(|p| if rng.random::<f64>() < p { 1.0 } else { 0.0 });
        }
        let neg_h = self.hidden_probs(&recon)?;

        let inv_n = 1.0 / n as f64;
        let pos = pos_h.t_matmul(batch)?;
        let neg = neg_h.t_matmul(&recon)?;
        for ((vel, p), q) in velocity
            .weights
            .as_mut_slice()
            .iter_mut()
            .zip(pos.as_slice())
            .zip(neg.as_slice())
        {
            *vel = momentum * *vel + (p - q) * inv_n;
        }
        let dv = batch
            .column_sums()
            .into_iter()
            .zip(recon.column_sums())
            .map(|(a, b)| (a - b) * inv_n);
        for (vel, g) in velocity.visible_bias.iter_mut().zip(dv) {
            *vel = momentum * *vel + g;
        }
        let dh = pos_h
            .column_sums()
            .into_iter()
            .zip(neg_h.column_sums())
            .map(|(a, b)| (a - b) * inv_n);
        for (vel, g) in velocity.hidden_bias.iter_mut().zip(dh) {
            *vel = momentum * *vel + g;
        }

        for (w, vel) in self.weights.as_mut_slice().iter_mut().zip(velocity.weights.as_slice()) {
            *w += lr * vel;
        }
        for (b, vel) in self.visible_bias.iter_mut().zip(&velocity.visible_bias) {
            *b += lr * vel;
        }
        for (b, vel) in self.hidden_bias.iter_mut().zip(&velocity.hidden_bias) {
            *b += lr * vel;
        }

        let err = batch
            .as_slice()
            .iter()
            .zip(recon.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / batch.as_slice().len() as f64;
        Ok(err)
    }

    /// Positive-phase statistic `⟨h vᵀ⟩₊ = p(h|v)ᵀ v / n`.
    pub fn positive_statistics(&self, batch: &Matrix) -> Result<Matrix, NnError> {
        let mut s = self.hidden_probs(batch)?.t_matmul(batch)?;
        let inv_n = 1.0 / batch.rows().max(1) as f64;
        s.map_inplace(|x| x * inv_n);
        Ok(s)
    }

    /// Shuffled mini-batch CD-1 epochs; returns the mean reconstruction error
    /// of each epoch.
    pub fn train_cd(&mut self, data: &Matrix, config: &CdConfig, seed: u64) -> Result<Vec<f64>, NnError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut velocity = CdVelocity::zeros(self);
        let mut order: Vec<usize> = (0..data.rows()).collect();
        let mut curve = Vec::with_capacity(config.epochs);
        for _ in 0..config.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for chunk in order.chunks(config.batch_size) {
                let batch = data.select_rows(chunk);
                let err = self.cd1_update(&batch, config.lr, config.momentum, &mut velocity, &mut rng)?;
                total += err * chunk.len() as f64;
            }
            curve.push(total / data.rows().max(1) as f64);
        }
        Ok(curve)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
}

impl Default for CdConfig {
    fn default() -> Self {
        Self {
            epochs: DEFAULT_CD_EPOCHS,
            lr: DEFAULT_CD_LR,
            momentum: DEFAULT_MOMENTUM,
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }
}

impl CdConfig {
    fn validate(&self) -> Result<(), NnError> {
        if self.batch_size == 0 {
            return Err(NnError::Config("CD batch size must be at least 1".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(NnError::Config(format!("CD learning rate must be >= 0, got {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbnStack {
    pub rbms: Vec<Rbm>,
}

impl DbnStack {
    /// Freshly initialised stack for the given widths (`[38, 100, 150, 200, 50]`).
    /// The first RBM has Gaussian visibles, the rest Bernoulli.
    pub fn new(widths: &[usize], seed: u64) -> Result<Self, NnError> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(NnError::InvalidSpec(format!("invalid DBN widths {widths:?}")));
        }
        let rbms = widths
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let kind = if k == 0 { VisibleKind::Gaussian } else { VisibleKind::Bernoulli };
                Rbm::new(w[0], w[1], kind, derive_seed(seed, &[k as u64]))
            })
            .collect();
        Ok(Self { rbms })
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w: Vec<usize> = self.rbms.iter().map(Rbm::n_visible).collect();
        if let Some(last) = self.rbms.last() {
            w.push(last.n_hidden());
        }
        w
    }

    /// Hidden probabilities of the top RBM.
    pub fn transform(&self, data: &Matrix) -> Result<Matrix, NnError> {
        let mut x = data.clone();
        for rbm in &self.rbms {
            x = rbm.hidden_probs(&x)?;
        }
        Ok(x)
    }
}

/// Reconstruction-error curves from greedy pretraining, one per layer.
pub type PretrainCurves = Vec<Vec<f64>>;

/// Greedy layer-wise CD-1 pretraining. RBM `k` trains on the hidden
/// probabilities produced by RBMs `0..k`.
pub fn pretrain_stack(
    widths: &[usize],
    data: &Matrix,
    config: &CdConfig,
    seed: u64,
) -> Result<(DbnStack, PretrainCurves), NnError> {
    let mut stack = DbnStack::new(widths, seed)?;
    if data.cols() != widths[0] {
        return Err(NnError::Shape(format!(
            "data has {} columns, first RBM expects {}",
            data.cols(),
            widths[0]
        )));
    }
    let mut input = data.clone();
    let mut curves = Vec::with_capacity(stack.rbms.len());
    let n = stack.rbms.len();
    for (k, rbm) in stack.rbms.iter_mut().enumerate() {
        let curve = rbm.train_cd(&input, config, derive_seed(seed, &[1_000 + k as u64]))?;
        curves.push(curve);
        if k + 1 < n {
            input = rbm.hidden_probs(&input)?;
        }
    }
    Ok((stack, curves))
}

/// Unrolls the stack into sigmoid layers and appends a Xavier-initialised
/// softmax head.
pub fn to_classifier(stack: &DbnStack, n_classes: usize, seed: u64) -> Result<ModelParams, NnError> {
    let top = stack
        .rbms
        .last()
        .ok_or_else(|| NnError::InvalidSpec("empty DBN stack".into()))?
        .n_hidden();
    let head_spec = LayerSpec::new(top, n_classes, Activation::Softmax);
    let head = init_xavier(&[head_spec], seed)?;
    let mut specs = Vec::with_capacity(stack.rbms.len() + 1);
    let mut layers = Vec::with_capacity(stack.rbms.len() + 1);
    for rbm in &stack.rbms {
        specs.push(LayerSpec::new(rbm.n_visible(), rbm.n_hidden(), Activation::Sigmoid));
        layers.push(Layer {
            weights: rbm.weights.clone(),
            biases: rbm.hidden_bias.clone(),
        });
    }
    specs.push(head_spec);
    layers.push(head.layers()[0].clone());
    ModelParams::new(specs, layers)
}
