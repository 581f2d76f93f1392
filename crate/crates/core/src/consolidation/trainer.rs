//! Per-task training loops: weight-space consolidation, plain replay and
//! from-scratch joint training.

use std::time::Instant;

use super::averaging::RunningAverage;
use super::config::{ConsolidationSchedule, ImportanceMetric, ResetConfig, ResetFrequency, ResetStrategy};
use super::importance::{
    score_first_moment, score_fisher, score_hessian_hutchinson, score_moment_with, score_param_drift,
    score_second_moment, ImportanceVector,
};
use super::reset::{alt_reset, eligible_coordinates, find_dormant_params, soft_reset};
use crate::error::{Error, Result};
use crate::nn::{init_params, loss_and_grad, ClassMask, NetworkSpec, ParameterSet};
use crate::optim::{MomentState, Optimizer, OptimizerConfig};
use crate::rng::{self, Rng, RngStreams};
use crate::scalar::Scalar;
use crate::tasks::{HybridPool, ReplayBuffer, SamplingMode, TaskStream};

/// Shadow-moment decay rates.
pub const SHADOW_BETA1: f64 = 0.9;
pub const SHADOW_BETA2: f64 = 0.999;

/// Everything a task-level training call reads but does not own.
#[derive(Debug, Clone, Copy)]
pub struct TrainContext<'a, T> {
    pub spec: &'a NetworkSpec,
    pub stream: &'a TaskStream<T>,
    /// 0-based index of the task being trained.
    pub task: usize,
    pub buffer: &'a ReplayBuffer<T>,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub sampling: SamplingMode,
    pub rngs: RngStreams,
    /// Keep a copy of the parameters after every epoch in the report.
    pub record_snapshots: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResetEvent {
    pub epoch: usize,
    /// Optimizer step within the epoch for per-iteration resets.
    pub iteration: Option<usize>,
    pub coordinates: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Coordinates reset during this epoch.
    pub reset_count: usize,
    /// Running-average updates so far in the task.
    pub avg_updates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskTrainReport<T> {
    pub task: usize,
    pub epochs: Vec<EpochRecord>,
    pub reset_events: Vec<ResetEvent>,
    pub avg_updates: usize,
    pub wall_clock_seconds: f64,
    pub optimizer_steps: u64,
    /// Per-sample forward/backward passes spent on optimizer steps.
    pub train_passes: u64,
    /// Per-sample passes spent on importance scoring and probes.
    pub extra_passes: u64,
    pub scored_coordinates: u64,
    /// Parameters after each epoch, before the final swap (only when requested).
    pub epoch_snapshots: Vec<ParameterSet<T>>,
}

impl<T> TaskTrainReport<T> {
    fn new(task: usize) -> Self {
        Self {
            task,
            epochs: Vec::new(),
            reset_events: Vec::new(),
            avg_updates: 0,
            wall_clock_seconds: 0.0,
            optimizer_steps: 0,
            train_passes: 0,
            extra_passes: 0,
            scored_coordinates: 0,
            epoch_snapshots: Vec::new(),
        }
    }

    /// Mean training loss of the last epoch.
    pub fn final_train_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_loss)
    }

    pub fn reset_coordinates(&self) -> usize {
        self.reset_events.iter().map(|e| e.coordinates).sum()
    }
}

/// Reset state carried through one task.
struct Resetter<'a, T> {
    cfg: &'a ResetConfig,
    theta_prev: ParameterSet<T>,
    eligible: Option<Vec<bool>>,
    rng: Rng,
    probe_rng: Rng,
}

impl<T: Scalar> Resetter<'_, T> {
    fn importance(
        &mut self,
        theta: &ParameterSet<T>,
        moments: &MomentState<T>,
        ctx: &TrainContext<'_, T>,
        pool: &HybridPool<T>,
        mask: &ClassMask,
        report: &mut TaskTrainReport<T>,
    ) -> Result<ImportanceVector<T>> {
        let raw = self.cfg.raw_moments;
        match self.cfg.metric {
            ImportanceMetric::Moment => score_moment_with(moments, raw),
            ImportanceMetric::FirstMomentOnly => score_first_moment(moments, raw),
            ImportanceMetric::SecondMomentOnly => score_second_moment(moments, raw),
            ImportanceMetric::ParamDrift => score_param_drift(theta, &self.theta_prev),
            ImportanceMetric::Fisher => {
                let idx = pool.draw_indices(self.cfg.fisher_samples, SamplingMode::Pooled, &mut self.probe_rng)?;
                report.extra_passes += idx.len() as u64;
                score_fisher(theta, ctx.spec, &pool.gather(&idx), mask)
            }
            ImportanceMetric::HessianHutchinson => {
                let idx = pool.draw_indices(ctx.batch_size, SamplingMode::Pooled, &mut self.probe_rng)?;
                let seed = rand::Rng::random::<u64>(&mut self.probe_rng);
                report.extra_passes += 2 * self.cfg.hutchinson_probes as u64 * idx.len() as u64;
                score_hessian_hutchinson(theta, ctx.spec, &pool.gather(&idx), mask, self.cfg.hutchinson_probes, seed)
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn apply(
        &mut self,
        theta: &mut ParameterSet<T>,
        moments: &MomentState<T>,
        ctx: &TrainContext<'_, T>,
        pool: &HybridPool<T>,
        mask: &ClassMask,
        report: &mut TaskTrainReport<T>,
    ) -> Result<usize> {
        if self.cfg.is_noop() {
            return Ok(0);
        }
        let needs_ranking = !matches!(
            self.cfg.strategy,
            ResetStrategy::ShrinkPerturb | ResetStrategy::ContinualBackprop
        );
        let dormant = if needs_ranking {
            let scores = self.importance(theta, moments, ctx, pool, mask, report)?;
            report.scored_coordinates += self
                .eligible
                .as_ref()
                .map_or(theta.len(), |e| e.iter().filter(|&&b| b).count()) as u64;
            find_dormant_params(&scores, self.cfg, theta.segments(), self.eligible.as_deref())?
        } else {
            Vec::new()
        };
        match self.cfg.strategy {
            ResetStrategy::SoftBlend => {
                soft_reset(theta, &self.theta_prev, &dormant, self.cfg.blend)?;
                Ok(dormant.len())
            }
            ResetStrategy::ContinualBackprop => {
                let idx = pool.draw_indices(ctx.batch_size, SamplingMode::Pooled, &mut self.probe_rng)?;
                report.extra_passes += idx.len() as u64;
                let probe = pool.gather(&idx);
                alt_reset(theta, &self.theta_prev, &dormant, self.cfg, ctx.spec, Some(&probe), &mut self.rng)
            }
            _ => alt_reset(theta, &self.theta_prev, &dormant, self.cfg, ctx.spec, None, &mut self.rng),
        }
    }
}

fn train_loop<T: Scalar>(
    mut theta: ParameterSet<T>,
    ctx: &TrainContext<'_, T>,
    schedule: &ConsolidationSchedule,
    reset_cfg: Option<&ResetConfig>,
) -> Result<(ParameterSet<T>, TaskTrainReport<T>)> {
    let started = Instant::now();
    ctx.spec.validate()?;
    ctx.optimizer.validate()?;
    if ctx.batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    let task = ctx
        .stream
        .tasks
        .get(ctx.task)
        .ok_or_else(|| Error::Config(format!("task index {} out of range", ctx.task)))?;
    let mut report = TaskTrainReport::new(ctx.task);
    if schedule.n_iter == 0 {
        return Ok((theta, report));
    }
    let pool = HybridPool::new(task, ctx.buffer, ctx.stream.input_dim)?;
    let mask = ctx.stream.seen_mask(ctx.task);
    let mut sampling_rng = ctx.rngs.get("sampling");
    let mut optimizer = Optimizer::new(ctx.optimizer, &theta)?;
    let mut moments = MomentState::new(&theta, T::lit(SHADOW_BETA1), T::lit(SHADOW_BETA2));

    let later_task = ctx.task > 0;
    let mut resetter = match reset_cfg {
        Some(cfg) if later_task && schedule.n_warm > 0 => {
            cfg.validate()?;
            Some(Resetter {
                cfg,
                theta_prev: theta.clone(),
                eligible: cfg.exclude_unseen_head.then(|| {
                    eligible_coordinates(ctx.spec, &theta, &ctx.stream.classes_before(ctx.task))
                }),
                rng: ctx.rngs.get("reset"),
                probe_rng: ctx.rngs.get("probe"),
            })
        }
        _ => None,
    };
    let averaging = schedule.averaging && later_task;
    let mut average = averaging.then(|| RunningAverage::new(theta.clone()));

    for epoch in 1..=schedule.n_iter {
        let batches = pool.epoch(ctx.batch_size, ctx.sampling, &mut sampling_rng)?;
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        let mut epoch_resets = 0usize;
        let per_iteration_reset =
            schedule.reset_frequency == ResetFrequency::EveryIteration && epoch > schedule.n_warm;
        for (it, idx) in batches.iter().enumerate() {
            let batch = pool.gather(idx);
            let (loss, grads) = loss_and_grad(&theta, ctx.spec, &batch, &mask)?;
            loss_sum += loss.to_f64_lossy() * batch.len() as f64;
            seen += batch.len();
            moments.update(&grads)?;
            optimizer.step(&mut theta, &grads)?;
            report.train_passes += batch.len() as u64;
            if per_iteration_reset {
                if let Some(r) = resetter.as_mut() {
                    let n = r.apply(&mut theta, &moments, ctx, &pool, &mask, &mut report)?;
                    epoch_resets += n;
                    report.reset_events.push(ResetEvent {
                        epoch,
                        iteration: Some(it + 1),
                        coordinates: n,
                    });
                }
            }
        }
        let reset_now = epoch == schedule.n_warm
            || (schedule.reset_frequency == ResetFrequency::EveryEpoch && epoch > schedule.n_warm);
        if reset_now {
            if let Some(r) = resetter.as_mut() {
                let n = r.apply(&mut theta, &moments, ctx, &pool, &mask, &mut report)?;
                epoch_resets += n;
                report.reset_events.push(ResetEvent {
                    epoch,
                    iteration: None,
                    coordinates: n,
                });
            }
        }
        if let Some(avg) = average.as_mut() {
            if epoch > schedule.n_warm && epoch % schedule.avg_interval == 0 {
                avg.update(&theta, epoch, schedule)?;
            }
        }
        report.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / seen.max(1) as f64,
            reset_count: epoch_resets,
            avg_updates: average.as_ref().map_or(0, RunningAverage::updates),
        });
        if ctx.record_snapshots {
            report.epoch_snapshots.push(theta.clone());
        }
    }
    report.optimizer_steps = optimizer.steps();
    if let Some(avg) = average {
        report.avg_updates = avg.updates();
        // With no update the average still holds the task's starting point.
        if avg.updates() > 0 {
            theta = avg.into_average();
        }
    }
    report.wall_clock_seconds = started.elapsed().as_secs_f64();
    Ok((theta, report))
}

/// Trains one task with rank-based dormant-parameter reset and in-training
/// weight averaging.
///
/// For every task after the first: the starting parameters are kept as
/// `theta_prev`; after `n_warm` epochs coordinates are scored, the dormant
/// ones reset; past warm-up the running average is refreshed every
/// `avg_interval` epochs and finally replaces the parameters. The first task
/// is plain training.
pub fn wsc_train_task<T: Scalar>(
    theta: ParameterSet<T>,
    ctx: &TrainContext<'_, T>,
    schedule: &ConsolidationSchedule,
    reset_cfg: &ResetConfig,
) -> Result<(ParameterSet<T>, TaskTrainReport<T>)> {
    schedule.validate()?;
    reset_cfg.validate()?;
    train_loop(theta, ctx, schedule, Some(reset_cfg))
}

/// Fine-tunes on `D_t ∪ M` for `epochs` epochs with no reset or averaging.
pub fn replay_train_task<T: Scalar>(
    theta: ParameterSet<T>,
    ctx: &TrainContext<'_, T>,
    epochs: usize,
) -> Result<(ParameterSet<T>, TaskTrainReport<T>)> {
    let schedule = ConsolidationSchedule {
        n_iter: epochs,
        n_warm: 0,
        averaging: false,
        ..ConsolidationSchedule::default()
    };
    train_loop(theta, ctx, &schedule, None)
}

/// Seed of the exemplar selection stream for a run seed.
pub fn buffer_seed(seed: u64) -> u64 {
    rng::derive_seed(seed, 0, "buffer-selection")
}

/// Builds the memory a continual run holds when task `t` starts.
pub fn buffer_before<T: Scalar>(stream: &TaskStream<T>, per_class_budget: usize, t: usize, seed: u64) -> Result<ReplayBuffer<T>> {
    let mut buffer = ReplayBuffer::new(per_class_budget, buffer_seed(seed));
    for task in &stream.tasks[..t] {
        buffer.update(task, per_class_budget)?;
    }
    Ok(buffer)
}

/// Settings shared by the from-scratch baseline.
#[derive(Debug, Clone, Copy)]
pub struct ScratchConfig {
    pub per_class_budget: usize,
    pub epochs: usize,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub sampling: SamplingMode,
    pub seed: u64,
}

/// Fresh initialization followed by one training phase on `D_t ∪ M_{<t}`.
pub fn scratch_train<T: Scalar>(
    spec: &NetworkSpec,
    stream: &TaskStream<T>,
    t: usize,
    cfg: &ScratchConfig,
) -> Result<(ParameterSet<T>, TaskTrainReport<T>)> {
    if t >= stream.len() {
        return Err(Error::Config(format!("task index {t} out of range")));
    }
    let buffer = buffer_before(stream, cfg.per_class_budget, t, cfg.seed)?;
    let theta = init_params(spec)?;
    let ctx = TrainContext {
        spec,
        stream,
        task: t,
        buffer: &buffer,
        optimizer: cfg.optimizer,
        batch_size: cfg.batch_size,
        sampling: cfg.sampling,
        rngs: RngStreams::new(cfg.seed, t),
        record_snapshots: false,
    };
    replay_train_task(theta, &ctx, cfg.epochs)
}
