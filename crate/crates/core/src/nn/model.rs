use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::{Matrix, NnError};

/// Floor applied to probabilities before taking a logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
    Softmax,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
            Activation::Softmax => "softmax",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            activation,
        }
    }
}

/// Builds a chain of layer specs from a list of widths: hidden layers use
/// `hidden`, the last layer is softmax.
pub fn chain_specs(widths: &[usize], hidden: Activation) -> Vec<LayerSpec> {
    let n = widths.len().saturating_sub(1);
    widths
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let act = if i + 1 == n { Activation::Softmax } else { hidden };
            LayerSpec::new(w[0], w[1], act)
        })
        .collect()
}

/// Checks the width chain and softmax placement.
pub fn validate_specs(specs: &[LayerSpec]) -> Result<(), NnError> {
    if specs.is_empty() {
        return Err(NnError::InvalidSpec("a model needs at least one layer".into()));
    }
    for (i, s) in specs.iter().enumerate() {
        if s.in_dim == 0 || s.out_dim == 0 {
            return Err(NnError::InvalidSpec(format!("layer {i} has a zero dimension")));
        }
        if i > 0 && specs[i - 1].out_dim != s.in_dim {
            return Err(NnError::InvalidSpec(format!(
                "layer {i} expects {} inputs but layer {} produces {}",
                s.in_dim,
                i - 1,
                specs[i - 1].out_dim
            )));
        }
        if s.activation == Activation::Softmax && i + 1 != specs.len() {
            return Err(NnError::InvalidSpec(format!(
                "layer {i}: softmax is only allowed on the final layer"
            )));
        }
    }
    Ok(())
}

/// Weights are stored `out_dim × in_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Matrix,
    pub biases: Vec<f64>,
}

impl Layer {
    pub fn zeros(spec: &LayerSpec) -> Self {
        Self {
            weights: Matrix::zeros(spec.out_dim, spec.in_dim),
            biases: vec![0.0; spec.out_dim],
        }
    }
}

/// Ordered layer parameters plus their shape metadata. This is the unit that
/// moves between the server and clients, and also the shape gradients take.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    specs: Vec<LayerSpec>,
    layers: Vec<Layer>,
}

impl ModelParams {
    pub fn new(specs: Vec<LayerSpec>, layers: Vec<Layer>) -> Result<Self, NnError> {
        validate_specs(&specs)?;
        if specs.len() != layers.len() {
            return Err(NnError::InvalidSpec(format!(
                "{} specs but {} layers",
                specs.len(),
                layers.len()
            )));
        }
        for (i, (s, l)) in specs.iter().zip(&layers).enumerate() {
            if l.weights.shape() != (s.out_dim, s.in_dim) || l.biases.len() != s.out_dim {
                return Err(NnError::InvalidSpec(format!(
                    "layer {i}: parameters are {:?} + {} biases, spec wants {}x{}",
                    l.weights.shape(),
                    l.biases.len(),
                    s.out_dim,
                    s.in_dim
                )));
            }
        }
        Ok(Self { specs, layers })
    }

    pub fn zeros(specs: &[LayerSpec]) -> Result<Self, NnError> {
        validate_specs(specs)?;
        Ok(Self {
            specs: specs.to_vec(),
            layers: specs.iter().map(Layer::zeros).collect(),
        })
    }

    /// Same shape, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self {
            specs: self.specs.clone(),
            layers: self.specs.iter().map(Layer::zeros).collect(),
        }
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.specs[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.specs[self.specs.len() - 1].out_dim
    }

    /// Widths from input to output, e.g. `[38, 128, 128, 64, 10]`.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.specs.iter().map(|s| s.out_dim))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.specs.iter().map(|s| s.out_dim * (s.in_dim + 1)).sum()
    }

    pub fn same_shape(&self, other: &ModelParams) -> bool {
        self.specs == other.specs
    }

    /// Parameter blocks in canonical order: per layer, weights then biases.
    pub fn tensors(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.biases.as_slice()])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.biases.as_mut_slice()])
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for t in self.tensors() {
            out.extend_from_slice(t);
        }
        out
    }

    pub fn from_flat(specs: &[LayerSpec], flat: &[f64]) -> Result<Self, NnError> {
        let mut params = Self::zeros(specs)?;
        if flat.len() != params.num_params() {
            return Err(NnError::Shape(format!(
                "flat buffer has {} values, model needs {}",
                flat.len(),
                params.num_params()
            )));
        }
        let mut offset = 0;
        for t in params.tensors_mut() {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
        Ok(params)
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Euclidean distance over all parameters.
    pub fn distance(&self, other: &ModelParams) -> f64 {
        self.tensors()
            .zip(other.tensors())
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)))
            .sum::<f64>()
            .sqrt()
    }

    /// Predicted class per row.
    pub fn predict(&self, batch: &Matrix) -> Result<Vec<usize>, NnError> {
        let pass = forward(self, batch)?;
        Ok(argmax_rows(pass.output()))
    }
}

pub fn argmax_rows(m: &Matrix) -> Vec<usize> {
    m.iter_rows()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Xavier/Glorot uniform weights, zero biases.
pub fn init_xavier(specs: &[LayerSpec], seed: u64) -> Result<ModelParams, NnError> {
    let mut params = ModelParams::zeros(specs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (spec, layer) in specs.iter().zip(params.layers.iter_mut()) {
        fill_xavier(&mut layer.weights, spec.in_dim, spec.out_dim, &mut rng);
    }
    Ok(params)
}

pub(crate) fn fill_xavier(w: &mut Matrix, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new(-bound, bound).expect("xavier bound is positive and finite");
    for x in w.as_mut_slice() {
        *x = dist.sample(rng);
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(m: &mut Matrix) {
    let cols = m.cols();
    if cols == 0 {
        return;
    }
    for row in m.as_mut_slice().chunks_exact_mut(cols) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        for x in row.iter_mut() {
            *x /= sum;
        }
    }
}

fn apply_activation(m: &mut Matrix, act: Activation) {
    match act {
        Activation::Relu => m.map_inplace(|x| x.max(0.0)),
        Activation::Sigmoid => m.map_inplace(sigmoid),
        Activation::Identity => {}
        Activation::Softmax => softmax_rows(m),
    }
}

/// Activations retained from a forward pass: `activations[0]` is the input,
/// `activations[k + 1]` the output of layer `k`.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub activations: Vec<Matrix>,
}

impl ForwardPass {
    /// Output of the final layer (class probabilities for softmax heads).
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("forward pass keeps the input")
    }

    pub fn into_output(mut self) -> Matrix {
        self.activations.pop().expect("forward pass keeps the input")
    }
}

/// Output of one layer for the given input.
pub fn layer_forward(spec: &LayerSpec, layer: &Layer, input: &Matrix) -> Result<Matrix, NnError> {
    let mut z = input.matmul_t(&layer.weights)?;
    z.add_row_vector(&layer.biases);
    apply_activation(&mut z, spec.activation);
    Ok(z)
}

pub fn forward(model: &ModelParams, batch: &Matrix) -> Result<ForwardPass, NnError> {
    if batch.cols() != model.input_dim() {
        return Err(NnError::Shape(format!(
            "batch has {} features, model expects {}",
            batch.cols(),
            model.input_dim()
        )));
    }
    let mut activations = Vec::with_capacity(model.layers.len() + 1);
    activations.push(batch.clone());
    for (spec, layer) in model.specs.iter().zip(&model.layers) {
        let next = layer_forward(spec, layer, activations.last().expect("non-empty"))?;
        activations.push(next);
    }
    Ok(ForwardPass { activations })
}

/// Mean negative log-likelihood of the true labels.
pub fn cross_entropy(probs: &Matrix, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -probs.get(i, y).max(PROB_FLOOR).ln())
        .sum();
    total / labels.len() as f64
}

/// Proximal term `(μ/2)‖w − anchor‖²` added to the local objective.
#[derive(Debug, Clone, PartialEq)]
pub struct Prox {
    pub mu: f64,
    pub anchor: ModelParams,
}

/// Gradients of mean cross-entropy (plus the proximal term when given).
/// The final layer must be softmax.
pub fn backward(
    model: &ModelParams,
    pass: &ForwardPass,
    labels: &[usize],
    prox: Option<&Prox>,
) -> Result<ModelParams, NnError> {
    let n_layers = model.layers.len();
    if pass.activations.len() != n_layers + 1 {
        return Err(NnError::Shape(format!(
            "forward pass holds {} activations, model has {n_layers} layers",
            pass.activations.len()
        )));
    }
    for (k, spec) in model.specs.iter().enumerate() {
        let a = &pass.activations[k + 1];
        if a.cols() != spec.out_dim || a.rows() != labels.len() {
            return Err(NnError::Shape(format!(
                "activation {} is {:?}, expected {}x{}",
                k + 1,
                a.shape(),
                labels.len(),
                spec.out_dim
            )));
        }
    }
    let last = model.specs[n_layers - 1];
    if last.activation != Activation::Softmax {
        return Err(NnError::InvalidSpec(
            "cross-entropy backward needs a softmax output layer".into(),
        ));
    }
    let n = labels.len();
    if let Some(&bad) = labels.iter().find(|&&y| y >= last.out_dim) {
        return Err(NnError::Label {
            label: bad,
            n_classes: last.out_dim,
        });
    }

    let mut grads = model.zeros_like();
    if n > 0 {
        let inv_n = 1.0 / n as f64;
        let mut delta = pass.activations[n_layers].clone();
        for (i, &y) in labels.iter().enumerate() {
            let row = delta.row_mut(i);
            row[y] -= 1.0;
            for v in row.iter_mut() {
                *v *= inv_n;
            }
        }
        for k in (0..n_layers).rev() {
            let input = &pass.activations[k];
            let g = &mut grads.layers[k];
            g.weights = delta.t_matmul(input)?;
            g.biases = delta.column_sums();
            if k == 0 {
                break;
            }
            let mut prev = delta.matmul(&model.layers[k].weights)?;
            let act = model.specs[k - 1].activation;
            let out = input.as_slice();
            for (d, &a) in prev.as_mut_slice().iter_mut().zip(out) {
                *d *= match act {
                    Activation::Relu => {
                        if a > 0.0 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    Activation::Sigmoid => a * (1.0 - a),
                    Activation::Identity => 1.0,
                    Activation::Softmax => unreachable!("validated: softmax only on last layer"),
                };
            }
            delta = prev;
        }
    }

    if let Some(p) = prox {
        if !p.anchor.same_shape(model) {
            return Err(NnError::Shape("proximal anchor differs in shape".into()));
        }
        for ((g, w), a) in grads
            .tensors_mut()
            .zip(model.tensors())
            .zip(p.anchor.tensors())
        {
            for ((gi, wi), ai) in g.iter_mut().zip(w).zip(a) {
                *gi += p.mu * (wi - ai);
            }
        }
    }
    Ok(grads)
}

/// Forward, loss and backward in one call.
pub fn loss_and_grad(
    model: &ModelParams,
    batch: &Matrix,
    labels: &[usize],
    prox: Option<&Prox>,
) -> Result<(f64, ModelParams), NnError> {
    let pass = forward(model, batch)?;
    let loss = cross_entropy(pass.output(), labels);
    let grads = backward(model, &pass, labels, prox)?;
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_layer(weights: Vec<f64>, biases: Vec<f64>, n_in: usize, n_out: usize) -> ModelParams {
        let spec = LayerSpec::new(n_in, n_out, Activation::Softmax);
        ModelParams::new(
            vec![spec],
            vec![Layer {
                weights: Matrix::from_vec(n_out, n_in, weights).unwrap(),
                biases,
            }],
        )
        .unwrap()
    }

    #[test]
    fn xavier_biases_zero_and_bounded() {
        let specs = chain_specs(&[38, 128, 128, 64, 10], Activation::Relu);
        let p = init_xavier(&specs, 7).unwrap();
        assert!(p.layers().iter().all(|l| l.biases.iter().all(|&b| b == 0.0)));
        let small = init_xavier(&[LayerSpec::new(2, 2, Activation::Softmax)], 3).unwrap();
        let bound = 1.5f64.sqrt();
        assert!(small.layers()[0]
            .weights
            .as_slice()
            .iter()
            .all(|w| w.abs() < bound));
        assert_eq!(init_xavier(&specs, 7).unwrap(), p);
        assert_ne!(init_xavier(&specs, 8).unwrap(), p);
    }

    #[test]
    fn broken_chain_names_layer() {
        let specs = vec![
            LayerSpec::new(4, 3, Activation::Relu),
            LayerSpec::new(5, 2, Activation::Softmax),
        ];
        let err = init_xavier(&specs, 0).unwrap_err().to_string();
        assert!(err.contains("layer 1"), "{err}");
        let hidden_softmax = vec![
            LayerSpec::new(4, 3, Activation::Softmax),
            LayerSpec::new(3, 2, Activation::Softmax),
        ];
        assert!(validate_specs(&hidden_softmax).is_err());
    }

    #[test]
    fn zero_model_is_uniform() {
        let specs = chain_specs(&[5, 4, 10], Activation::Relu);
        let p = ModelParams::zeros(&specs).unwrap();
        let batch = Matrix::from_rows(&[vec![1.0, -2.0, 3.0, 0.5, 9.0]]).unwrap();
        let pass = forward(&p, &batch).unwrap();
        assert!(pass.output().as_slice().iter().all(|&q| (q - 0.1).abs() < 1e-15));
    }

    #[test]
    fn softmax_closed_form() {
        let p = single_layer(vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0], 2, 2);
        let batch = Matrix::from_rows(&[vec![2f64.ln(), 0.0]]).unwrap();
        let probs = forward(&p, &batch).unwrap().into_output();
        assert!((probs.get(0, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((probs.get(0, 1) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let p = single_layer(vec![0.0; 4], vec![0.0; 2], 2, 2);
        assert!(forward(&p, &Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn cross_entropy_values() {
        let one_hot = Matrix::from_rows(&[vec![0.0, 1.0]]).unwrap();
        assert_eq!(cross_entropy(&one_hot, &[1]), 0.0);
        let uniform = Matrix::from_rows(&[vec![0.1; 10]]).unwrap();
        assert!((cross_entropy(&uniform, &[3]) - 10f64.ln()).abs() < 1e-12);
        let p = Matrix::from_rows(&[vec![0.25, 0.75]]).unwrap();
        assert!((cross_entropy(&p, &[1]) - 0.287_682_072_451_780_9).abs() < 1e-12);
        let wrong = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert!((cross_entropy(&wrong, &[1]) - (-PROB_FLOOR.ln())).abs() < 1e-9);
    }

    #[test]
    fn zero_net_bias_gradient_closed_form() {
        // Uniform 0.25 over 4 classes with labels 0..4 once each: mean(probs - onehot)
        // is 0.25 - 0.25 = 0 for every class.
        let specs = chain_specs(&[3, 4], Activation::Relu);
        let p = ModelParams::zeros(&specs).unwrap();
        let batch = Matrix::from_rows(&[[1.0, 2.0, 3.0], [0.0, 1.0, 0.0], [4.0, 4.0, 4.0], [-1.0, 0.0, 1.0]]).unwrap();
        let (_, g) = loss_and_grad(&p, &batch, &[0, 1, 2, 3], None).unwrap();
        assert!(g.layers()[0].biases.iter().all(|b| b.abs() < 1e-15));
        // Two samples of class 0 only: bias gradient = [0.25 - 1, 0.25, 0.25, 0.25].
        let (_, g) = loss_and_grad(&p, &batch.select_rows(&[0, 1]), &[0, 0], None).unwrap();
        let want = [-0.75, 0.25, 0.25, 0.25];
        for (b, w) in g.layers()[0].biases.iter().zip(want) {
            assert!((b - w).abs() < 1e-15);
        }
    }

    #[test]
    fn prox_increment() {
        let p = single_layer(vec![1.0, -1.0], vec![0.0], 2, 1);
        let anchor = single_layer(vec![0.0, 0.0], vec![0.0], 2, 1);
        let batch = Matrix::from_rows(&[vec![0.3, 0.4]]).unwrap();
        let pass = forward(&p, &batch).unwrap();
        let plain = backward(&p, &pass, &[0], None).unwrap();
        let prox = Prox { mu: 0.1, anchor: anchor.clone() };
        let with = backward(&p, &pass, &[0], Some(&prox)).unwrap();
        let inc: Vec<f64> = with.layers()[0]
            .weights
            .as_slice()
            .iter()
            .zip(plain.layers()[0].weights.as_slice())
            .map(|(a, b)| a - b)
            .collect();
        assert!((inc[0] - 0.1).abs() < 1e-15 && (inc[1] + 0.1).abs() < 1e-15);

        let zero = Prox { mu: 0.0, anchor };
        assert_eq!(backward(&p, &pass, &[0], Some(&zero)).unwrap(), plain);
    }

    #[test]
    fn flat_round_trip() {
        let specs = chain_specs(&[3, 4, 2], Activation::Sigmoid);
        let p = init_xavier(&specs, 11).unwrap();
        assert_eq!(ModelParams::from_flat(&specs, &p.to_flat()).unwrap(), p);
        assert!(ModelParams::from_flat(&specs, &[0.0; 3]).is_err());
    }
}
