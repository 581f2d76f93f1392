//! One continual run: train every task in order, evaluate, update memory.

use std::time::Instant;

use anyhow::{bail, Context, Result};
use wsc_core::consolidation::{
    replay_train_task, wsc_train_task, TaskTrainReport, TrainContext,
};
use wsc_core::metrics::{
    average_final_accuracy, drift_record, eval_accuracy_row, forgetting, gradient_alignment, plasticity,
    AccuracyMatrix, AlignmentRecord, CostRecord, DriftRecord,
};
use wsc_core::nn::{init_params, NetworkSpec};
use wsc_core::rng::{derive_seed, RngStreams};
use wsc_core::tasks::{gen_synthetic_stream, load_idx_stream, memory_ratio, read_stream, ReplayBuffer};
use wsc_core::{consolidation::buffer_seed, Params, Stream};

use crate::config::{Method, RunConfig, StreamSource};

pub fn load_stream(cfg: &RunConfig) -> Result<Stream> {
    let stream = match &cfg.stream {
        StreamSource::Synthetic(s) => gen_synthetic_stream(s)?,
        StreamSource::Idx {
            images,
            labels,
            tasks,
            test_fraction,
            seed,
        } => load_idx_stream(images, labels, *tasks, *seed, *test_fraction)
            .with_context(|| format!("loading IDX pair {} / {}", images.display(), labels.display()))?,
        StreamSource::File(p) => {
            let f = std::fs::File::open(p).with_context(|| format!("opening stream file {}", p.display()))?;
            read_stream(std::io::BufReader::new(f)).with_context(|| format!("reading {}", p.display()))?
        }
    };
    stream.validate()?;
    Ok(stream)
}

/// Network for a run; the initialization depends on the run seed.
pub fn network_spec(cfg: &RunConfig, stream: &Stream, seed: u64) -> NetworkSpec {
    NetworkSpec::new(
        stream.input_dim,
        cfg.hidden.clone(),
        stream.num_classes,
        derive_seed(seed, 0, "init"),
    )
}

#[derive(Debug, Clone)]
pub struct TaskRecord {
    pub report: TaskTrainReport<f64>,
    pub alignment: Option<AlignmentRecord>,
    pub drift: DriftRecord,
    /// Accuracy on tasks `0..=t` right after training task `t`.
    pub accuracy: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub run_id: String,
    pub label: String,
    pub method: Method,
    pub budget: usize,
    pub seed: u64,
    /// Memory ratio when the last task starts (absent for single-task streams).
    pub kappa: Option<f64>,
    pub tasks: Vec<TaskRecord>,
    pub accuracy: AccuracyMatrix,
    pub avg_final_acc: f64,
    pub forgetting: Option<f64>,
    pub plasticity: f64,
    pub rho_mean: Option<f64>,
    pub cost: CostRecord,
    pub final_theta: Params,
    pub wall_clock_seconds: f64,
}

impl RunRecord {
    /// Mean training loss over the last epoch of the last task.
    pub fn final_train_loss(&self) -> Option<f64> {
        self.tasks.last().and_then(|t| t.report.final_train_loss())
    }

    /// Mean inter-task drift over tasks after the first.
    pub fn mean_inter_task_drift(&self) -> Option<f64> {
        let d: Vec<f64> = self.tasks.iter().skip(1).map(|t| t.drift.inter_task_l2).collect();
        (!d.is_empty()).then(|| d.iter().sum::<f64>() / d.len() as f64)
    }

    pub fn metric_name(&self, cfg: &RunConfig) -> &'static str {
        match self.method {
            Method::Wsc => cfg.reset.metric.as_str(),
            _ => "none",
        }
    }

    pub fn strategy_name(&self, cfg: &RunConfig) -> &'static str {
        match self.method {
            Method::Wsc => cfg.reset.strategy.as_str(),
            _ => "none",
        }
    }
}

/// Runs all tasks of `stream` for one `(budget, seed)`. `on_task` sees every
/// finished task as it completes, so callers can stream logs.
pub fn run_continual(
    cfg: &RunConfig,
    stream: &Stream,
    budget: usize,
    seed: u64,
    mut on_task: impl FnMut(&TaskRecord) -> Result<()>,
) -> Result<RunRecord> {
    let started = Instant::now();
    if stream.is_empty() {
        bail!("stream has no tasks");
    }
    let spec = network_spec(cfg, stream, seed);
    let mut theta: Params = init_params(&spec)?;
    let mut buffer = ReplayBuffer::new(budget, buffer_seed(seed));
    let mut accuracy = AccuracyMatrix::new(stream.len());
    let mut tasks = Vec::with_capacity(stream.len());
    let mut cost = CostRecord::default();
    let mut kappa = None;

    for t in 0..stream.len() {
        let rngs = RngStreams::new(seed, t);
        if t > 0 && t + 1 == stream.len() {
            kappa = Some(memory_ratio(&buffer, stream, t)?);
        }
        let alignment = if cfg.alignment && t > 0 && !buffer.is_empty() {
            let mut rng = rngs.get("alignment");
            Some(gradient_alignment(
                &theta,
                &spec,
                &stream.tasks[t],
                &buffer,
                &stream.seen_mask(t),
                cfg.probe_size,
                &mut rng,
            )?)
        } else {
            None
        };
        let ctx = TrainContext {
            spec: &spec,
            stream,
            task: t,
            buffer: &buffer,
            optimizer: cfg.optimizer,
            batch_size: cfg.batch_size,
            sampling: cfg.sampling,
            rngs,
            record_snapshots: true,
        };
        let before = theta.clone();
        let (next, mut report) = match cfg.method {
            Method::Wsc => wsc_train_task(theta, &ctx, &cfg.schedule, &cfg.reset)?,
            Method::Replay => replay_train_task(theta, &ctx, cfg.schedule.n_iter)?,
            Method::Scratch => replay_train_task(init_params(&spec)?, &ctx, cfg.schedule.n_iter)?,
        };
        theta = next;
        let drift = drift_record(t, &before, &theta, &report.epoch_snapshots)?;
        report.epoch_snapshots.clear();
        let row = eval_accuracy_row(&theta, &spec, stream, t)?;
        accuracy.set_column(t, &row)?;
        buffer.update(&stream.tasks[t], budget)?;
        cost.add(&CostRecord::from(&report));
        let record = TaskRecord {
            report,
            alignment,
            drift,
            accuracy: row,
        };
        on_task(&record)?;
        tasks.push(record);
    }

    let rhos: Vec<f64> = tasks.iter().filter_map(|t| t.alignment.map(|a| a.rho)).collect();
    Ok(RunRecord {
        run_id: cfg.run_id(budget, seed),
        label: cfg.display_label(),
        method: cfg.method,
        budget,
        seed,
        kappa,
        avg_final_acc: average_final_accuracy(&accuracy)?,
        forgetting: (stream.len() >= 2).then(|| forgetting(&accuracy)).transpose()?,
        plasticity: plasticity(&accuracy)?,
        rho_mean: (!rhos.is_empty()).then(|| rhos.iter().sum::<f64>() / rhos.len() as f64),
        accuracy,
        tasks,
        cost,
        final_theta: theta,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    })
}
