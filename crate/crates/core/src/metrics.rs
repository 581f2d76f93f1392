//! Evaluation quantities: accuracy matrices, forgetting, plasticity,
//! gradient alignment, parameter drift and cost accounting.

use crate::error::{Error, Result};
use crate::nn::{loss_and_grad, predict, ClassMask, NetworkSpec, ParameterSet, Tensor};
use crate::rng::Rng;
use crate::scalar::{dot, l2_distance, norm, Scalar};
use crate::tasks::{sample_buffer_batch, sample_task_batch, ReplayBuffer, TaskSpec, TaskStream};

/// Norm below which a mean gradient counts as zero for alignment.
pub const ALIGNMENT_EPS: f64 = 1e-12;

/// `a[k][i]`: accuracy on task `k` right after training task `i` (`k <= i`).
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyMatrix {
    tasks: usize,
    cells: Vec<Option<f64>>,
}

impl AccuracyMatrix {
    pub fn new(tasks: usize) -> Self {
        Self {
            tasks,
            cells: vec![None; tasks * tasks],
        }
    }

    pub fn tasks(&self) -> usize {
        self.tasks
    }

    pub fn get(&self, k: usize, i: usize) -> Option<f64> {
        if k >= self.tasks || i >= self.tasks {
            return None;
        }
        self.cells[k * self.tasks + i]
    }

    pub fn set(&mut self, k: usize, i: usize, acc: f64) -> Result<()> {
        if k > i || i >= self.tasks {
            return Err(Error::Shape(format!("cell ({k}, {i}) outside the lower triangle of a {}-task matrix", self.tasks)));
        }
        if !(0.0..=1.0).contains(&acc) {
            return Err(Error::Domain(format!("accuracy {acc} outside [0, 1]")));
        }
        self.cells[k * self.tasks + i] = Some(acc);
        Ok(())
    }

    /// Stores the column measured after training task `i` (entries for tasks `0..=i`).
    pub fn set_column(&mut self, i: usize, row: &[f64]) -> Result<()> {
        if row.len() != i + 1 {
            return Err(Error::Shape(format!("column {i} needs {} entries, got {}", i + 1, row.len())));
        }
        for (k, &acc) in row.iter().enumerate() {
            self.set(k, i, acc)?;
        }
        Ok(())
    }

    /// Builds a matrix from a dense `T x T` array, keeping only `k <= i`.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let t = rows.len();
        let mut m = Self::new(t);
        for (k, row) in rows.iter().enumerate() {
            if row.len() != t {
                return Err(Error::Shape("accuracy matrix must be square".into()));
            }
            for (i, &a) in row.iter().enumerate().take(t).skip(k) {
                m.set(k, i, a)?;
            }
        }
        Ok(m)
    }

    fn require(&self, k: usize, i: usize) -> Result<f64> {
        self.get(k, i)
            .ok_or_else(|| Error::Domain(format!("accuracy entry ({k}, {i}) is missing")))
    }

    /// Accuracy-after-each-step curve: mean of column `i` for every completed column.
    pub fn running_average(&self) -> Vec<f64> {
        (0..self.tasks)
            .map_while(|i| {
                let col: Option<Vec<f64>> = (0..=i).map(|k| self.get(k, i)).collect();
                col.map(|c| c.iter().sum::<f64>() / c.len() as f64)
            })
            .collect()
    }
}

/// Fraction of `task`'s test split classified correctly among the classes in `mask`.
pub fn eval_task_accuracy<T: Scalar>(
    theta: &ParameterSet<T>,
    spec: &NetworkSpec,
    task: &TaskSpec<T>,
    mask: &ClassMask,
) -> Result<f64> {
    if task.test.is_empty() {
        return Err(Error::Domain(format!("task {} has no test data", task.task_id)));
    }
    let rows: Vec<&[T]> = task.test.iter().map(|e| e.features.as_slice()).collect();
    let inputs = Tensor::from_rows(&rows, spec.input_dim)?;
    let pred = predict(theta, spec, &inputs, mask)?;
    let correct = pred.iter().zip(&task.test).filter(|(p, e)| **p == e.label).count();
    Ok(correct as f64 / task.test.len() as f64)
}

/// Column `i` of the accuracy matrix: class-IL accuracy on tasks `0..=i`
/// with prediction restricted to classes seen through task `i`.
pub fn eval_accuracy_row<T: Scalar>(
    theta: &ParameterSet<T>,
    spec: &NetworkSpec,
    stream: &TaskStream<T>,
    i: usize,
) -> Result<Vec<f64>> {
    if i >= stream.len() {
        return Err(Error::Config(format!("task index {i} out of range")));
    }
    let mask = stream.seen_mask(i);
    stream.tasks[..=i]
        .iter()
        .map(|task| eval_task_accuracy(theta, spec, task, &mask))
        .collect()
}

/// Mean of the final column.
pub fn average_final_accuracy(a: &AccuracyMatrix) -> Result<f64> {
    let t = a.tasks();
    if t == 0 {
        return Err(Error::Domain("empty accuracy matrix".into()));
    }
    let mut sum = 0.0;
    for k in 0..t {
        sum += a.require(k, t - 1)?;
    }
    Ok(sum / t as f64)
}

/// Mean drop from each earlier task's best accuracy to its final accuracy.
pub fn forgetting(a: &AccuracyMatrix) -> Result<f64> {
    let t = a.tasks();
    if t < 2 {
        return Err(Error::Domain("forgetting needs at least two tasks".into()));
    }
    let last = t - 1;
    let mut sum = 0.0;
    for k in 0..last {
        let mut best = f64::NEG_INFINITY;
        for i in k..t {
            best = best.max(a.require(k, i)?);
        }
        sum += best - a.require(k, last)?;
    }
    Ok(sum / last as f64)
}

/// Mean accuracy on each task right after learning it.
pub fn plasticity(a: &AccuracyMatrix) -> Result<f64> {
    let t = a.tasks();
    if t == 0 {
        return Err(Error::Domain("empty accuracy matrix".into()));
    }
    let mut sum = 0.0;
    for k in 0..t {
        sum += a.require(k, k)?;
    }
    Ok(sum / t as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentRecord {
    pub task: usize,
    pub rho: f64,
    pub norm_new: f64,
    pub norm_past: f64,
    /// Set when either mean gradient had (near) zero norm and `rho` was forced to 0.
    pub degenerate: bool,
}

/// Cosine similarity of two flat vectors, 0 with the degenerate flag when
/// either norm is below [`ALIGNMENT_EPS`].
pub fn cosine_alignment<T: Scalar>(task: usize, g_new: &[T], g_past: &[T]) -> Result<AlignmentRecord> {
    if g_new.len() != g_past.len() {
        return Err(Error::Shape(format!("gradient lengths {} and {}", g_new.len(), g_past.len())));
    }
    let norm_new = norm(g_new).to_f64_lossy();
    let norm_past = norm(g_past).to_f64_lossy();
    let degenerate = norm_new < ALIGNMENT_EPS || norm_past < ALIGNMENT_EPS;
    let rho = if degenerate {
        0.0
    } else {
        (dot(g_new, g_past).to_f64_lossy() / (norm_new * norm_past)).clamp(-1.0, 1.0)
    };
    Ok(AlignmentRecord {
        task,
        rho,
        norm_new,
        norm_past,
        degenerate,
    })
}

/// Cosine between the mean gradient on a probe batch of `task` and on a
/// probe batch of the buffer, both under `mask`.
pub fn gradient_alignment<T: Scalar>(
    theta: &ParameterSet<T>,
    spec: &NetworkSpec,
    task: &TaskSpec<T>,
    buffer: &ReplayBuffer<T>,
    mask: &ClassMask,
    probe_size: usize,
    rng: &mut Rng,
) -> Result<AlignmentRecord> {
    if buffer.is_empty() {
        return Err(Error::Domain("gradient alignment needs a nonempty buffer".into()));
    }
    if probe_size == 0 {
        return Err(Error::Config("probe_size must be >= 1".into()));
    }
    let new_batch = sample_task_batch(task, probe_size, rng)?;
    let past_batch = sample_buffer_batch(buffer, probe_size, rng)?;
    let (_, g_new) = loss_and_grad(theta, spec, &new_batch, mask)?;
    let (_, g_past) = loss_and_grad(theta, spec, &past_batch, mask)?;
    cosine_alignment(task.task_id, g_new.values(), g_past.values())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftRecord {
    pub task: usize,
    /// `||theta_after - theta_before||_2`.
    pub inter_task_l2: f64,
    /// Distance of each epoch snapshot from the previous one (the first from `theta_before`).
    pub intra_task_l2_per_epoch: Vec<f64>,
}

pub fn drift_record<T: Scalar>(
    task: usize,
    theta_before: &ParameterSet<T>,
    theta_after: &ParameterSet<T>,
    per_epoch_snapshots: &[ParameterSet<T>],
) -> Result<DriftRecord> {
    theta_before.check_layout(theta_after)?;
    let mut prev = theta_before;
    let mut intra = Vec::with_capacity(per_epoch_snapshots.len());
    for snap in per_epoch_snapshots {
        theta_before.check_layout(snap)?;
        intra.push(l2_distance(prev.values(), snap.values()).to_f64_lossy());
        prev = snap;
    }
    Ok(DriftRecord {
        task,
        inter_task_l2: l2_distance(theta_before.values(), theta_after.values()).to_f64_lossy(),
        intra_task_l2_per_epoch: intra,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostRecord {
    pub optimizer_steps: u64,
    pub wall_clock_seconds: f64,
    pub scored_coordinates: u64,
    pub extra_forward_backward_passes: u64,
    /// Per-sample passes spent on optimizer steps.
    pub train_passes: u64,
}

impl CostRecord {
    pub fn add(&mut self, other: &CostRecord) {
        self.optimizer_steps += other.optimizer_steps;
        self.wall_clock_seconds += other.wall_clock_seconds;
        self.scored_coordinates += other.scored_coordinates;
        self.extra_forward_backward_passes += other.extra_forward_backward_passes;
        self.train_passes += other.train_passes;
    }

    /// Extra passes as a fraction of training passes.
    pub fn overhead_ratio(&self) -> f64 {
        if self.train_passes == 0 {
            0.0
        } else {
            self.extra_forward_backward_passes as f64 / self.train_passes as f64
        }
    }
}

impl<T> From<&crate::consolidation::TaskTrainReport<T>> for CostRecord {
    fn from(r: &crate::consolidation::TaskTrainReport<T>) -> Self {
        Self {
            optimizer_steps: r.optimizer_steps,
            wall_clock_seconds: r.wall_clock_seconds,
            scored_coordinates: r.scored_coordinates,
            extra_forward_backward_passes: r.extra_passes,
            train_passes: r.train_passes,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[&[f64]]) -> AccuracyMatrix {
        AccuracyMatrix::from_dense(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn final_accuracy_mean() {
        let a = matrix(&[&[0.9, 0.8], &[0.0, 0.6]]);
        assert!((average_final_accuracy(&a).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn forgetting_one_prior_task() {
        let a = matrix(&[&[0.8, 0.7], &[0.0, 0.9]]);
        assert!((forgetting(&a).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn forgetting_monotone_rows_is_zero() {
        let a = matrix(&[&[0.5, 0.6, 0.7], &[0.0, 0.4, 0.4], &[0.0, 0.0, 0.9]]);
        assert_eq!(forgetting(&a).unwrap(), 0.0);
    }

    #[test]
    fn forgetting_needs_two_tasks() {
        let a = matrix(&[&[0.5]]);
        assert!(matches!(forgetting(&a), Err(Error::Domain(_))));
    }

    #[test]
    fn plasticity_is_diagonal_mean() {
        let a = matrix(&[&[0.9, 0.1, 0.1], &[0.0, 0.7, 0.1], &[0.0, 0.0, 0.8]]);
        assert!((plasticity(&a).unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn incomplete_column_is_domain_error() {
        let mut a = AccuracyMatrix::new(2);
        a.set(0, 0, 1.0).unwrap();
        a.set(1, 1, 1.0).unwrap();
        assert!(matches!(average_final_accuracy(&a), Err(Error::Domain(_))));
        assert!(plasticity(&a).is_ok());
        assert!(a.set(1, 0, 0.5).is_err());
    }

    #[test]
    fn cosine_cases() {
        let g = [1.0, -2.0, 0.5];
        assert!((cosine_alignment(1, &g, &g).unwrap().rho - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = g.iter().map(|x| -x).collect();
        assert!((cosine_alignment(1, &g, &neg).unwrap().rho + 1.0).abs() < 1e-15);
        let zero = [0.0; 3];
        let r = cosine_alignment(1, &g, &zero).unwrap();
        assert_eq!(r.rho, 0.0);
        assert!(r.degenerate);
        let scaled: Vec<f64> = g.iter().map(|x| 7.5 * x).collect();
        let base = cosine_alignment(1, &g, &[0.3, 0.1, -0.2]).unwrap().rho;
        let r2 = cosine_alignment(1, &scaled, &[0.3, 0.1, -0.2]).unwrap().rho;
        assert!((base - r2).abs() < 1e-12);
    }

    #[test]
    fn drift_norms() {
        let a = ParameterSet::<f64>::zeros([("w", vec![3])]);
        let mut b = a.clone();
        assert_eq!(drift_record(0, &a, &b, &[]).unwrap().inter_task_l2, 0.0);
        b.values_mut()[1] = 3.0;
        let d = drift_record(0, &a, &b, std::slice::from_ref(&b)).unwrap();
        assert_eq!(d.inter_task_l2, 3.0);
        assert_eq!(d.intra_task_l2_per_epoch, vec![3.0]);
        let other = ParameterSet::<f64>::zeros([("w", vec![2])]);
        assert!(matches!(drift_record(0, &a, &other, &[]), Err(Error::Shape(_))));
    }

    #[test]
    fn running_average_stops_at_incomplete_column() {
        let mut a = AccuracyMatrix::new(3);
        a.set_column(0, &[1.0]).unwrap();
        a.set_column(1, &[0.5, 1.0]).unwrap();
        assert_eq!(a.running_average(), vec![1.0, 0.75]);
    }
}
