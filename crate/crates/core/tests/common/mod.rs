//! Independent reference implementations used by the integration tests.

#![allow(dead_code)]

use fediron_core::flow::{FlowRecord, Value};
use fediron_core::nn::{
    chain_specs, cross_entropy, forward, init_xavier, loss_and_grad, Activation, LayerSpec, ModelParams, Prox,
};
use fediron_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random MLP with 1–3 layers, every width in `1..=max_dim`, random hidden
/// activations and a softmax head.
pub fn random_model(rng: &mut ChaCha8Rng, max_dim: usize) -> ModelParams {
    let depth = rng.random_range(1..=3);
    let widths: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=max_dim)).collect();
    let mut specs: Vec<LayerSpec> = chain_specs(&widths, Activation::Relu);
    for spec in specs.iter_mut().take(depth - 1) {
        spec.activation = match rng.random_range(0..3) {
            0 => Activation::Relu,
            1 => Activation::Sigmoid,
            _ => Activation::Identity,
        };
    }
    let mut model = init_xavier(&specs, rng.random()).unwrap();
    for layer in model.layers_mut() {
        for b in &mut layer.biases {
            *b = rng.random_range(-0.5..0.5);
        }
    }
    model
}

pub fn random_batch(rng: &mut ChaCha8Rng, n: usize, dim: usize, n_classes: usize) -> (Matrix, Vec<usize>) {
    let data = (0..n * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
    let labels = (0..n).map(|_| rng.random_range(0..n_classes)).collect();
    (Matrix::from_vec(n, dim, data).unwrap(), labels)
}

fn objective(model: &ModelParams, x: &Matrix, y: &[usize], prox: Option<&Prox>) -> f64 {
    let ce = cross_entropy(forward(model, x).unwrap().output(), y);
    let penalty = prox.map_or(0.0, |p| {
        let d = model.distance(&p.anchor);
        0.5 * p.mu * d * d
    });
    ce + penalty
}

/// Largest relative disagreement between backprop and central differences.
/// Relative error is `|a − n| / max(|a| + |n|, floor)`. Central differences
/// at ε = 1e-6 carry roundoff near 1e-10, so without a floor a gradient of
/// order 1e-6 would be judged on noise alone.
pub const GRAD_FLOOR: f64 = 1e-4;

pub fn max_relative_grad_error(
    model: &ModelParams,
    x: &Matrix,
    y: &[usize],
    prox: Option<&Prox>,
    eps: f64,
    floor: f64,
) -> f64 {
    let (_, grads) = loss_and_grad(model, x, y, prox).unwrap();
    let analytic = grads.to_flat();
    let flat = model.to_flat();
    let specs = model.specs().to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..flat.len() {
        let mut plus = flat.clone();
        plus[i] += eps;
        let mut minus = flat.clone();
        minus[i] -= eps;
        let fp = objective(&ModelParams::from_flat(&specs, &plus).unwrap(), x, y, prox);
        let fm = objective(&ModelParams::from_flat(&specs, &minus).unwrap(), x, y, prox);
        let numeric = (fp - fm) / (2.0 * eps);
        let a = analytic[i];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(floor);
        worst = worst.max(rel);
    }
    worst
}

/// Per-class (precision, recall, f1, support) straight from labelled pairs.
pub fn brute_per_class(pairs: &[(usize, usize)], n_classes: usize) -> Vec<(f64, f64, f64, u64)> {
    (0..n_classes)
        .map(|c| {
            let tp = pairs.iter().filter(|&&(t, p)| t == c && p == c).count() as f64;
            let fp = pairs.iter().filter(|&&(t, p)| t != c && p == c).count() as f64;
            let fn_ = pairs.iter().filter(|&&(t, p)| t == c && p != c).count() as f64;
            let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            (precision, recall, f1, (tp + fn_) as u64)
        })
        .collect()
}

pub fn brute_weighted(per_class: &[(f64, f64, f64, u64)]) -> (f64, f64, f64) {
    let total: f64 = per_class.iter().map(|c| c.3 as f64).sum();
    let w = |f: fn(&(f64, f64, f64, u64)) -> f64| per_class.iter().map(|c| c.3 as f64 * f(c)).sum::<f64>() / total;
    (w(|c| c.0), w(|c| c.1), w(|c| c.2))
}

pub fn brute_accuracy(pairs: &[(usize, usize)]) -> f64 {
    pairs.iter().filter(|(t, p)| t == p).count() as f64 / pairs.len() as f64
}

/// Random confusion counts expanded into (truth, prediction) pairs.
pub fn random_pairs(rng: &mut ChaCha8Rng, n_classes: usize, max_cell: u64) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for t in 0..n_classes {
        for p in 0..n_classes {
            // Leave some cells, rows and columns empty to exercise 0/0.
            let n = if rng.random_bool(0.3) { 0 } else { rng.random_range(0..=max_cell) };
            pairs.extend(std::iter::repeat_n((t, p), n as usize));
        }
    }
    pairs
}

/// Train count for a class of size `n` under an 80/20 split: round-half-up of
/// `0.8·n` in integer arithmetic; classes below two samples stay in train.
pub fn expected_train_count(n: usize) -> usize {
    if n < 2 {
        n
    } else {
        (8 * n + 5) / 10
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `⟨h vᵀ⟩₊` for a binary-hidden RBM by summing over every hidden
/// configuration with weights `exp(hᵀ W v + b_hᵀ h)`.
pub fn enumerate_positive_statistics(weights: &[Vec<f64>], hidden_bias: &[f64], batch: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let nh = weights.len();
    let nv = batch[0].len();
    let mut stats = vec![vec![0.0; nv]; nh];
    for v in batch {
        let mut z = 0.0;
        let mut expect_h = vec![0.0; nh];
        for mask in 0..(1u32 << nh) {
            let h: Vec<f64> = (0..nh).map(|j| f64::from((mask >> j) & 1)).collect();
            let mut energy = 0.0;
            for j in 0..nh {
                energy += h[j] * hidden_bias[j];
                for i in 0..nv {
                    energy += h[j] * weights[j][i] * v[i];
                }
            }
            let w = energy.exp();
            z += w;
            for j in 0..nh {
                expect_h[j] += w * h[j];
            }
        }
        for j in 0..nh {
            for i in 0..nv {
                stats[j][i] += expect_h[j] / z * v[i] / batch.len() as f64;
            }
        }
    }
    stats
}

/// The eight binary patterns used as the CD sanity fixture, each repeated
/// `copies` times.
pub fn eight_patterns(copies: usize) -> Matrix {
    const PATTERNS: [[u8; 12]; 8] = [
        [1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0],
        [0, 0, 0, 0, 1, 1, 1, 1, 0, 0, 0, 0],
        [0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1],
        [1, 1, 0, 0, 1, 1, 0, 0, 1, 1, 0, 0],
        [0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 1, 1],
        [1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0],
        [0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1],
        [1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0],
    ];
    let rows: Vec<Vec<f64>> = (0..copies)
        .flat_map(|_| PATTERNS.iter().map(|p| p.iter().map(|&b| f64::from(b)).collect()))
        .collect();
    Matrix::from_rows(&rows).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A numeric-only record for flow-level tests.
pub fn numeric_record(ip: &str, label: usize, values: &[f64]) -> FlowRecord {
    FlowRecord {
        dst_ip: ip.to_string(),
        features: values.iter().map(|&v| Value::Num(v)).collect(),
        label,
    }
}
