#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wsc_core::nn::{Batch, NetworkSpec, Tensor};
use wsc_core::tasks::{gen_synthetic_stream, SyntheticStreamConfig, TaskStream};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_batch(rng: &mut ChaCha8Rng, rows: usize, dim: usize, classes: usize) -> Batch<f64> {
    let data: Vec<f64> = (0..rows * dim).map(|_| rng.random_range(-1.5..1.5)).collect();
    let labels = (0..rows).map(|_| rng.random_range(0..classes)).collect();
    Batch::new(Tensor::new(vec![rows, dim], data).unwrap(), labels, vec![0; rows]).unwrap()
}

pub fn random_spec(rng: &mut ChaCha8Rng) -> NetworkSpec {
    let depth = rng.random_range(0..=3);
    let hidden = (0..depth).map(|_| rng.random_range(1..=9)).collect();
    NetworkSpec::new(rng.random_range(1..=6), hidden, rng.random_range(2..=5), rng.random())
}

pub fn small_stream(seed: u64, tasks: usize, classes: usize, dim: usize, train: usize) -> TaskStream<f64> {
    gen_synthetic_stream(&SyntheticStreamConfig {
        seed,
        tasks,
        classes_per_task: classes,
        input_dim: dim,
        n_train_per_class: train,
        n_test_per_class: 20,
        cluster_separation: 4.0,
    })
    .unwrap()
}
