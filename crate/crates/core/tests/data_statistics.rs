mod common;

use std::collections::HashMap;

use wsc_core::consolidation::{buffer_before, scratch_train, ScratchConfig};
use wsc_core::metrics::eval_accuracy_row;
use wsc_core::nn::NetworkSpec;
use wsc_core::optim::OptimizerConfig;
use wsc_core::rng;
use wsc_core::tasks::{
    gen_synthetic_stream, memory_ratio, task_weights, HybridPool, ReplayBuffer, SamplingMode, SyntheticStreamConfig,
    TaskStream,
};

fn key(features: &[f64]) -> Vec<u64> {
    features.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn exemplar_inclusion_is_uniform_within_class() {
    let stream = common::small_stream(3, 2, 2, 3, 20);
    let task = &stream.tasks[0];
    let (draws, budget, per_class) = (10_000u64, 5usize, 20usize);
    let mut hits: HashMap<Vec<u64>, usize> = task.train.iter().map(|e| (key(&e.features), 0)).collect();
    for seed in 0..draws {
        let mut buffer = ReplayBuffer::new(budget, seed);
        buffer.update(task, budget).unwrap();
        for c in &task.class_ids {
            assert_eq!(buffer.class_examples(*c).len(), budget);
        }
        for e in buffer.examples() {
            *hits.get_mut(&key(&e.features)).expect("stored example comes from the task") += 1;
        }
    }
    let p = budget as f64 / per_class as f64;
    let sd = (p * (1.0 - p) / draws as f64).sqrt();
    for (k, &n) in &hits {
        let freq = n as f64 / draws as f64;
        assert!((freq - p).abs() < 3.0 * sd, "example {k:?}: frequency {freq} vs {p} (sd {sd})");
    }
}

/// Five tasks of 1000 training examples; memory of four tasks at 500 per class.
fn pool_fixture() -> (TaskStream<f64>, ReplayBuffer<f64>) {
    let stream = common::small_stream(8, 5, 2, 3, 500);
    let buffer = buffer_before(&stream, 500, 4, 1).unwrap();
    (stream, buffer)
}

#[test]
fn pooled_batches_draw_the_current_task_in_proportion() {
    let (stream, buffer) = pool_fixture();
    let pool = HybridPool::new(&stream.tasks[4], &buffer, 3).unwrap();
    assert_eq!((pool.current_len(), pool.memory_len()), (1000, 4000));
    let mut r = rng::stream(0, 0, "pooled-share");
    let mut current = 0usize;
    let (batches, b) = (10_000, 100);
    for _ in 0..batches {
        let idx = pool.draw_indices(b, SamplingMode::Pooled, &mut r).unwrap();
        current += idx.iter().filter(|&&i| i < pool.current_len()).count();
    }
    let share = current as f64 / (batches * b) as f64;
    assert!((share - 0.2).abs() < 0.01, "share {share}");

    // A full epoch covers the pool exactly once.
    let mut seen: Vec<usize> = pool
        .epoch(b, SamplingMode::Pooled, &mut r)
        .unwrap()
        .into_iter()
        .flatten()
        .collect();
    seen.sort_unstable();
    assert_eq!(seen, (0..5000).collect::<Vec<_>>());
}

#[test]
fn explicit_alpha_sets_the_current_share() {
    let (stream, buffer) = pool_fixture();
    let pool = HybridPool::new(&stream.tasks[4], &buffer, 3).unwrap();
    let mut r = rng::stream(1, 0, "explicit-share");
    for alpha in [0.0, 0.5, 0.9, 1.0] {
        let idx = pool.draw_indices(100_000, SamplingMode::Explicit { alpha }, &mut r).unwrap();
        let share = idx.iter().filter(|&&i| i < pool.current_len()).count() as f64 / idx.len() as f64;
        assert!((share - alpha).abs() < 0.01, "alpha {alpha}: share {share}");
    }
}

#[test]
fn task_weights_match_brute_force_counts() {
    let stream = common::small_stream(2, 4, 3, 2, 12);
    let mut buffer = ReplayBuffer::new(0, 4);
    // Shrinking budgets exercise truncation of older classes.
    for (t, budget) in [(0, 9), (1, 6), (2, 7)] {
        buffer.update(&stream.tasks[t], budget).unwrap();
        let w = task_weights(&buffer).unwrap();
        let mut counts = [0usize; 4];
        for task in &stream.tasks[..=t] {
            for &c in &task.class_ids {
                counts[task.task_id] += buffer.class_examples(c).len();
            }
        }
        let total: usize = counts.iter().sum();
        assert_eq!(total, buffer.len());
        for (task, &weight) in &w {
            assert!((weight - counts[*task] as f64 / total as f64).abs() < 1e-15);
        }
        assert!((w.values().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn memory_ratio_grows_with_budget() {
    let stream = common::small_stream(5, 4, 2, 2, 50);
    let mut last = 0.0;
    for budget in [1, 2, 5, 10, 25, 50, 80] {
        let buffer = buffer_before(&stream, budget, 3, 0).unwrap();
        let kappa = memory_ratio(&buffer, &stream, 3).unwrap();
        assert!(kappa >= last);
        assert!((kappa - budget.min(50) as f64 / 50.0).abs() < 1e-12);
        last = kappa;
    }
    assert_eq!(last, 1.0);
}

#[test]
fn joint_training_on_well_separated_clusters_is_accurate() {
    let stream: TaskStream<f64> = gen_synthetic_stream(&SyntheticStreamConfig {
        seed: 0,
        tasks: 5,
        classes_per_task: 2,
        input_dim: 20,
        n_train_per_class: 100,
        n_test_per_class: 50,
        cluster_separation: 6.0,
    })
    .unwrap();
    let spec = NetworkSpec::new(20, vec![64], 10, 1);
    let cfg = ScratchConfig {
        per_class_budget: 100,
        epochs: 20,
        optimizer: OptimizerConfig::adam(1e-3),
        batch_size: 32,
        sampling: SamplingMode::Pooled,
        seed: 0,
    };
    let (theta, _) = scratch_train(&spec, &stream, 4, &cfg).unwrap();
    let row = eval_accuracy_row(&theta, &spec, &stream, 4).unwrap();
    let mean = row.iter().sum::<f64>() / row.len() as f64;
    assert!(mean >= 0.9, "joint accuracy {mean} ({row:?})");
}
