//! Hybrid batches drawn from the current task and the replay buffer.

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::buffer::ReplayBuffer;
use super::stream::{LabeledExample, TaskSpec};
use crate::error::{Error, Result};
use crate::nn::{Batch, Tensor};
use crate::rng::Rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SamplingMode {
    /// Uniform over the multiset `D_t ∪ M`, so the current-task share is
    /// `|D_t| / (|D_t| + |M|)`.
    #[default]
    Pooled,
    /// Each slot comes from `D_t` with probability `alpha`, otherwise from `M`.
    Explicit { alpha: f64 },
}

/// Contiguous copy of `D_t ∪ M` for fast batch gathering. Current-task
/// examples come first.
#[derive(Debug, Clone)]
pub struct HybridPool<T> {
    features: Vec<T>,
    labels: Vec<usize>,
    tasks: Vec<usize>,
    input_dim: usize,
    current: usize,
}

impl<T: Scalar> HybridPool<T> {
    pub fn new(current: &TaskSpec<T>, buffer: &ReplayBuffer<T>, input_dim: usize) -> Result<Self> {
        if current.train.is_empty() {
            return Err(Error::Domain(format!("task {} has no training data", current.task_id)));
        }
        if buffer.contains_task(current.task_id) {
            return Err(Error::Contract(format!(
                "buffer already holds examples of the current task {}",
                current.task_id
            )));
        }
        let mut pool = Self {
            features: Vec::new(),
            labels: Vec::new(),
            tasks: Vec::new(),
            input_dim,
            current: current.train.len(),
        };
        for ex in current.train.iter().chain(buffer.examples()) {
            pool.push(ex)?;
        }
        Ok(pool)
    }

    fn push(&mut self, ex: &LabeledExample<T>) -> Result<()> {
        if ex.features.len() != self.input_dim {
            return Err(Error::Shape(format!(
                "example width {} differs from {}",
                ex.features.len(),
                self.input_dim
            )));
        }
        self.features.extend_from_slice(&ex.features);
        self.labels.push(ex.label);
        self.tasks.push(ex.source_task);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn current_len(&self) -> usize {
        self.current
    }

    pub fn memory_len(&self) -> usize {
        self.len() - self.current
    }

    pub fn gather(&self, idx: &[usize]) -> Batch<T> {
        let d = self.input_dim;
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            data.extend_from_slice(&self.features[i * d..(i + 1) * d]);
        }
        Batch {
            inputs: Tensor::new(vec![idx.len(), d], data).expect("gathered rows"),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            task_ids: idx.iter().map(|&i| self.tasks[i]).collect(),
        }
    }

    /// Pool indices for one batch drawn with replacement.
    pub fn draw_indices(&self, batch_size: usize, mode: SamplingMode, rng: &mut Rng) -> Result<Vec<usize>> {
        if batch_size == 0 {
            return Err(Error::Domain("batch size must be >= 1".into()));
        }
        match mode {
            SamplingMode::Pooled => Ok((0..batch_size).map(|_| rng.random_range(0..self.len())).collect()),
            SamplingMode::Explicit { alpha } => {
                if !(0.0..=1.0).contains(&alpha) {
                    return Err(Error::Config("alpha must be in [0, 1]".into()));
                }
                let mem = self.memory_len();
                if mem == 0 && alpha < 1.0 {
                    return Err(Error::Domain("explicit sampling with alpha < 1 needs a non-empty buffer".into()));
                }
                // Picking a past task with weight proportional to its stored count
                // and then an exemplar uniformly inside it is uniform over M.
                Ok((0..batch_size)
                    .map(|_| {
                        if alpha >= 1.0 || rng.random::<f64>() < alpha {
                            rng.random_range(0..self.current)
                        } else {
                            self.current + rng.random_range(0..mem)
                        }
                    })
                    .collect())
            }
        }
    }

    /// Index batches covering one epoch.
    ///
    /// Pooled mode shuffles the whole pool and cuts it into `ceil(N / B)`
    /// batches (the last may be short). Explicit mode draws the same number of
    /// batches with replacement.
    pub fn epoch(&self, batch_size: usize, mode: SamplingMode, rng: &mut Rng) -> Result<Vec<Vec<usize>>> {
        if batch_size == 0 {
            return Err(Error::Domain("batch size must be >= 1".into()));
        }
        match mode {
            SamplingMode::Pooled => {
                let mut order: Vec<usize> = (0..self.len()).collect();
                order.shuffle(rng);
                Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
            }
            SamplingMode::Explicit { .. } => {
                let n = self.len().div_ceil(batch_size);
                (0..n).map(|_| self.draw_indices(batch_size, mode, rng)).collect()
            }
        }
    }
}

/// One batch of size `batch_size` from `D_t ∪ M`, drawn with replacement.
pub fn sample_hybrid_batch<T: Scalar>(
    current: &TaskSpec<T>,
    buffer: &ReplayBuffer<T>,
    batch_size: usize,
    mode: SamplingMode,
    rng: &mut Rng,
) -> Result<Batch<T>> {
    let dim = current
        .train
        .first()
        .map(|e| e.features.len())
        .ok_or_else(|| Error::Domain(format!("task {} has no training data", current.task_id)))?;
    let pool = HybridPool::new(current, buffer, dim)?;
    let idx = pool.draw_indices(batch_size, mode, rng)?;
    Ok(pool.gather(&idx))
}

/// Uniform batch from the buffer alone.
pub fn sample_buffer_batch<T: Scalar>(buffer: &ReplayBuffer<T>, size: usize, rng: &mut Rng) -> Result<Batch<T>> {
    let all: Vec<&LabeledExample<T>> = buffer.examples().collect();
    if all.is_empty() {
        return Err(Error::Domain("empty buffer".into()));
    }
    let dim = all[0].features.len();
    let picked: Vec<&LabeledExample<T>> = (0..size).map(|_| all[rng.random_range(0..all.len())]).collect();
    super::stream::examples_to_batch(picked, dim)
}

/// Uniform batch from a task's training split.
pub fn sample_task_batch<T: Scalar>(task: &TaskSpec<T>, size: usize, rng: &mut Rng) -> Result<Batch<T>> {
    if task.train.is_empty() {
        return Err(Error::Domain(format!("task {} has no training data", task.task_id)));
    }
    let dim = task.train[0].features.len();
    let picked: Vec<&LabeledExample<T>> = (0..size)
        .map(|_| &task.train[rng.random_range(0..task.train.len())])
        .collect();
    super::stream::examples_to_batch(picked, dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::tasks::{buffer_update, gen_synthetic_stream, SyntheticStreamConfig, TaskStream};

    fn setup() -> (TaskStream<f64>, ReplayBuffer<f64>) {
        let s: TaskStream<f64> = gen_synthetic_stream(&SyntheticStreamConfig {
            seed: 2,
            tasks: 2,
            classes_per_task: 2,
            input_dim: 3,
            n_train_per_class: 20,
            n_test_per_class: 1,
            cluster_separation: 3.0,
        })
        .unwrap();
        let b = buffer_update(ReplayBuffer::new(10, 0), &s.tasks[0], 10).unwrap();
        (s, b)
    }

    #[test]
    fn first_task_batches_come_from_current_data() {
        let (s, _) = setup();
        let empty = ReplayBuffer::new(10, 0);
        let mut r = rng::stream(0, 0, "t");
        let b = sample_hybrid_batch(&s.tasks[0], &empty, 32, SamplingMode::Pooled, &mut r).unwrap();
        assert!(b.task_ids.iter().all(|&t| t == 0));
    }

    #[test]
    fn alpha_zero_draws_only_memory() {
        let (s, buf) = setup();
        let mut r = rng::stream(0, 0, "t");
        let b = sample_hybrid_batch(&s.tasks[1], &buf, 64, SamplingMode::Explicit { alpha: 0.0 }, &mut r).unwrap();
        assert!(b.task_ids.iter().all(|&t| t == 0));
    }

    #[test]
    fn explicit_without_memory_is_a_domain_error() {
        let (s, _) = setup();
        let mut r = rng::stream(0, 0, "t");
        let empty = ReplayBuffer::new(10, 0);
        assert!(matches!(
            sample_hybrid_batch(&s.tasks[1], &empty, 4, SamplingMode::Explicit { alpha: 0.5 }, &mut r),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn epoch_covers_pool_once() {
        let (s, buf) = setup();
        let pool = HybridPool::new(&s.tasks[1], &buf, 3).unwrap();
        let mut r = rng::stream(0, 0, "t");
        let batches = pool.epoch(16, SamplingMode::Pooled, &mut r).unwrap();
        assert_eq!(batches.len(), 60usize.div_ceil(16));
        let mut all: Vec<usize> = batches.concat();
        all.sort_unstable();
        assert_eq!(all, (0..60).collect::<Vec<_>>());
    }

    #[test]
    fn current_task_in_buffer_is_rejected() {
        let (s, buf) = setup();
        assert!(HybridPool::new(&s.tasks[0], &buf, 3).is_err());
    }
}
