use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use fediron_core::dbn::{CdVelocity, Rbm, VisibleKind};
use fediron_core::fl::{initial_model, ServerState};
use fediron_core::nn::{loss_and_grad, Optimizer};
use fediron_core::{AggregationConfig, ClientUpdate, Matrix, ModelParams, ModelPreset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FEATURES: usize = 39;
const CLASSES: usize = 10;
const BATCH: usize = 128;

fn batch(seed: u64) -> (Matrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..BATCH * FEATURES).map(|_| rng.random_range(-2.0..2.0)).collect();
    let y = (0..BATCH).map(|_| rng.random_range(0..CLASSES)).collect();
    (Matrix::from_vec(BATCH, FEATURES, data).unwrap(), y)
}

fn updates(global: &ModelParams, n: usize) -> Vec<ClientUpdate> {
    (0..n)
        .map(|i| {
            let mut params = global.clone();
            for t in params.tensors_mut() {
                for (j, w) in t.iter_mut().enumerate() {
                    *w += ((i * 31 + j) % 17) as f64 * 1e-3;
                }
            }
            ClientUpdate {
                client_id: i,
                params,
                n_samples: 100 + 10 * i,
            }
        })
        .collect()
}

fn sgd_step(c: &mut Criterion) {
    let (x, y) = batch(1);
    for preset in [ModelPreset::Dnn, ModelPreset::Dbn] {
        let model = initial_model(preset, FEATURES, CLASSES, 7).unwrap();
        c.bench_function(&format!("train_step/{}", preset.name()), |b| {
            b.iter_batched(
                || (model.clone(), Optimizer::new(&preset.default_optimizer(), &model)),
                |(mut params, mut opt)| {
                    let (loss, grads) = loss_and_grad(&params, &x, &y, None).unwrap();
                    opt.step(&mut params, &grads).unwrap();
                    black_box(loss)
                },
                BatchSize::SmallInput,
            )
        });
    }
}

fn aggregation(c: &mut Criterion) {
    let global = initial_model(ModelPreset::Dnn, FEATURES, CLASSES, 7).unwrap();
    let ups = updates(&global, 10);
    c.bench_function("aggregate/fedavg", |b| {
        let agg = AggregationConfig::FedAvg;
        b.iter_batched(
            || ServerState::new(global.clone(), &agg),
            |mut s| {
                s.apply(&agg, &ups).unwrap();
                black_box(s)
            },
            BatchSize::SmallInput,
        )
    });
    c.bench_function("aggregate/fedyogi", |b| {
        let agg = AggregationConfig::FedYogi {
            eta: 0.01,
            beta1: 0.9,
            beta2: 0.99,
            tau: 1e-3,
        };
        b.iter_batched(
            || ServerState::new(global.clone(), &agg),
            |mut s| {
                s.apply(&agg, &ups).unwrap();
                black_box(s)
            },
            BatchSize::SmallInput,
        )
    });
}

fn cd_step(c: &mut Criterion) {
    let (x, _) = batch(2);
    let rbm = Rbm::new(FEATURES, 128, VisibleKind::Gaussian, 3);
    c.bench_function("cd1_step/gaussian_128", |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        b.iter_batched(
            || (rbm.clone(), CdVelocity::zeros(&rbm)),
            |(mut r, mut vel)| black_box(r.cd1_update(&x, 0.01, 0.5, &mut vel, &mut rng).unwrap()),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, sgd_step, aggregation, cd_step);
criterion_main!(benches);
