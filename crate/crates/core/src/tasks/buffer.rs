use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;

use super::stream::{LabeledExample, TaskSpec, TaskStream};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

/// Per-class exemplar memory.
///
/// Each class keeps at most `per_class_budget` examples, chosen uniformly
/// without replacement with a stream keyed by `(selection_seed, class)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer<T> {
    per_class_budget: usize,
    stored: BTreeMap<usize, Vec<LabeledExample<T>>>,
    tasks: BTreeSet<usize>,
    selection_seed: u64,
}

impl<T: Scalar> ReplayBuffer<T> {
    pub fn new(per_class_budget: usize, selection_seed: u64) -> Self {
        Self {
            per_class_budget,
            stored: BTreeMap::new(),
            tasks: BTreeSet::new(),
            selection_seed,
        }
    }

    pub fn per_class_budget(&self) -> usize {
        self.per_class_budget
    }

    pub fn len(&self) -> usize {
        self.stored.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains_task(&self, t: usize) -> bool {
        self.tasks.contains(&t)
    }

    pub fn classes(&self) -> impl Iterator<Item = usize> + '_ {
        self.stored.keys().copied()
    }

    pub fn class_examples(&self, c: usize) -> &[LabeledExample<T>] {
        self.stored.get(&c).map(Vec::as_slice).unwrap_or(&[])
    }

    /// All stored examples, ascending class id, then selection order.
    pub fn examples(&self) -> impl Iterator<Item = &LabeledExample<T>> + '_ {
        self.stored.values().flatten()
    }

    /// Adds exemplars of a finished task.
    ///
    /// A smaller `per_class_budget` than before truncates every stored class to
    /// its first selected examples; a larger one only applies to new classes.
    pub fn update(&mut self, finished: &TaskSpec<T>, per_class_budget: usize) -> Result<()> {
        if self.tasks.contains(&finished.task_id) {
            return Err(Error::Contract(format!(
                "task {} is already in the buffer",
                finished.task_id
            )));
        }
        if per_class_budget < self.per_class_budget {
            for list in self.stored.values_mut() {
                list.truncate(per_class_budget);
            }
        }
        self.per_class_budget = per_class_budget;
        for &c in &finished.class_ids {
            let pool: Vec<&LabeledExample<T>> = finished.train.iter().filter(|e| e.label == c).collect();
            let k = per_class_budget.min(pool.len());
            let mut r = rng::stream(self.selection_seed, c as u64, "buffer-select");
            let picked = index::sample(&mut r, pool.len(), k);
            self.stored
                .insert(c, picked.into_iter().map(|i| pool[i].clone()).collect());
        }
        self.tasks.insert(finished.task_id);
        Ok(())
    }
}

pub fn buffer_update<T: Scalar>(
    mut buffer: ReplayBuffer<T>,
    finished: &TaskSpec<T>,
    per_class_budget: usize,
) -> Result<ReplayBuffer<T>> {
    buffer.update(finished, per_class_budget)?;
    Ok(buffer)
}

/// Fraction of past training data held in memory while training task `t`
/// (0-based, so `t >= 1`): `|M| / sum_{j<t} |D_j|`.
pub fn memory_ratio<T: Scalar>(buffer: &ReplayBuffer<T>, stream: &TaskStream<T>, t: usize) -> Result<f64> {
    if t < 1 || t > stream.len() {
        return Err(Error::Domain(format!(
            "memory ratio needs at least one past task, got task index {t}"
        )));
    }
    let past = stream.train_len_before(t);
    if past == 0 {
        return Err(Error::Domain("past tasks hold no training data".into()));
    }
    let stored = buffer.examples().filter(|e| e.source_task < t).count();
    Ok(stored as f64 / past as f64)
}

/// Empirical past-task weights, proportional to stored counts.
pub fn task_weights<T: Scalar>(buffer: &ReplayBuffer<T>) -> Result<BTreeMap<usize, f64>> {
    let total = buffer.len();
    if total == 0 {
        return Err(Error::Domain("task weights of an empty buffer".into()));
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for e in buffer.examples() {
        *counts.entry(e.source_task).or_default() += 1;
    }
    Ok(counts
        .into_iter()
        .map(|(t, n)| (t, n as f64 / total as f64))
        .collect())
}
