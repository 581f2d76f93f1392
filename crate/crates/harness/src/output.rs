//! Result files: summary CSV, per-run logs, checkpoints and sweep aggregates.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use wsc_core::Checkpoint;

use crate::config::RunConfig;
use crate::experiment::{RunRecord, TaskRecord};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";

/// One line of the summary CSV. Column order is fixed by field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub run_id: String,
    pub method: String,
    pub metric: String,
    pub strategy: String,
    pub budget_per_class: usize,
    pub kappa: Option<f64>,
    pub seed: u64,
    pub avg_final_acc: f64,
    pub forgetting: Option<f64>,
    pub plasticity: f64,
    pub rho_mean: Option<f64>,
    pub steps: u64,
    pub extra_passes: u64,
    /// Left empty unless wall-clock recording is switched on, so reruns stay byte-identical.
    pub wall_clock_s: Option<f64>,
}

pub const SUMMARY_COLUMNS: [&str; 14] = [
    "run_id",
    "method",
    "metric",
    "strategy",
    "budget_per_class",
    "kappa",
    "seed",
    "avg_final_acc",
    "forgetting",
    "plasticity",
    "rho_mean",
    "steps",
    "extra_passes",
    "wall_clock_s",
];

impl SummaryRow {
    pub fn from_record(rec: &RunRecord, cfg: &RunConfig) -> Self {
        Self {
            run_id: rec.run_id.clone(),
            method: rec.label.clone(),
            metric: rec.metric_name(cfg).to_string(),
            strategy: rec.strategy_name(cfg).to_string(),
            budget_per_class: rec.budget,
            kappa: rec.kappa,
            seed: rec.seed,
            avg_final_acc: rec.avg_final_acc,
            forgetting: rec.forgetting,
            plasticity: rec.plasticity,
            rho_mean: rec.rho_mean,
            steps: rec.cost.optimizer_steps,
            extra_passes: rec.cost.extra_forward_backward_passes,
            wall_clock_s: cfg.wall_clock.then_some(rec.wall_clock_seconds),
        }
    }
}

pub fn write_rows<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    if rows.is_empty() {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(SUMMARY_COLUMNS)?;
        w.flush()?;
        return Ok(());
    }
    write_rows(path, rows)
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != SUMMARY_COLUMNS {
        bail!("{}: unexpected summary header {:?}", path.display(), header);
    }
    r.deserialize()
        .collect::<Result<Vec<SummaryRow>, _>>()
        .with_context(|| format!("parsing {}", path.display()))
}

#[derive(Serialize)]
struct EpochLine {
    epoch: usize,
    train_loss: f64,
    reset_count: usize,
    avg_updates: usize,
    task: usize,
}

/// Appends one JSON object per epoch of `task`.
pub fn write_epoch_lines(w: &mut impl Write, task: &TaskRecord) -> Result<()> {
    for e in &task.report.epochs {
        let line = EpochLine {
            epoch: e.epoch,
            train_loss: e.train_loss,
            reset_count: e.reset_count,
            avg_updates: e.avg_updates,
            task: task.report.task,
        };
        serde_json::to_writer(&mut *w, &line)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Serialize)]
struct TaskLine {
    task: usize,
    final_train_loss: Option<f64>,
    rho: Option<f64>,
    rho_degenerate: Option<bool>,
    inter_task_l2: f64,
    reset_coordinates: usize,
    avg_updates: usize,
    optimizer_steps: u64,
    train_passes: u64,
    extra_passes: u64,
    scored_coordinates: u64,
}

/// Per-run artifacts: accuracy matrix, per-task diagnostics, effective config
/// and (optionally) the final checkpoint.
pub fn write_run_artifacts(dir: &Path, rec: &RunRecord, cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(dir)?;
    let t = rec.accuracy.tasks();
    let mut w = csv::Writer::from_path(dir.join("accuracy.csv"))?;
    let mut header = vec!["task".to_string()];
    header.extend((0..t).map(|i| format!("after_{i}")));
    w.write_record(&header)?;
    for k in 0..t {
        let mut row = vec![k.to_string()];
        row.extend((0..t).map(|i| rec.accuracy.get(k, i).map(|a| a.to_string()).unwrap_or_default()));
        w.write_record(&row)?;
    }
    w.flush()?;

    let lines: Vec<TaskLine> = rec
        .tasks
        .iter()
        .map(|tr| TaskLine {
            task: tr.report.task,
            final_train_loss: tr.report.final_train_loss(),
            rho: tr.alignment.map(|a| a.rho),
            rho_degenerate: tr.alignment.map(|a| a.degenerate),
            inter_task_l2: tr.drift.inter_task_l2,
            reset_coordinates: tr.report.reset_coordinates(),
            avg_updates: tr.report.avg_updates,
            optimizer_steps: tr.report.optimizer_steps,
            train_passes: tr.report.train_passes,
            extra_passes: tr.report.extra_passes,
            scored_coordinates: tr.report.scored_coordinates,
        })
        .collect();
    write_rows(&dir.join("tasks.csv"), &lines)?;

    let mut echo = format!("# run {} budget {} seed {}\n", rec.run_id, rec.budget, rec.seed);
    echo.push_str(&cfg.render());
    fs::write(dir.join("config.txt"), echo)?;
    if cfg.checkpoint {
        Checkpoint::new(rec.final_theta.clone()).save(dir.join("final.wsck"))?;
    }
    Ok(())
}

/// Mean and standard error of one column within a group.
fn mean_se(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some((var / n).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: String,
    pub metric: String,
    pub strategy: String,
    pub budget_per_class: usize,
    pub kappa: Option<f64>,
    pub n_seeds: usize,
    pub avg_final_acc_mean: f64,
    pub avg_final_acc_se: Option<f64>,
    pub forgetting_mean: Option<f64>,
    pub forgetting_se: Option<f64>,
    pub plasticity_mean: f64,
    pub plasticity_se: Option<f64>,
    pub rho_mean_mean: Option<f64>,
    pub rho_mean_se: Option<f64>,
    pub steps_mean: f64,
    pub extra_passes_mean: f64,
}

pub const AGGREGATE_COLUMNS: [&str; 16] = [
    "method",
    "metric",
    "strategy",
    "budget_per_class",
    "kappa",
    "n_seeds",
    "avg_final_acc_mean",
    "avg_final_acc_se",
    "forgetting_mean",
    "forgetting_se",
    "plasticity_mean",
    "plasticity_se",
    "rho_mean_mean",
    "rho_mean_se",
    "steps_mean",
    "extra_passes_mean",
];

/// Groups rows by `(method, budget)`; output is sorted by that key and each
/// group is reduced in seed order, so the result does not depend on row order.
pub fn aggregate(rows: &[SummaryRow]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(String, usize), Vec<&SummaryRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.method.clone(), r.budget_per_class)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((method, budget), mut g)| {
            g.sort_by(|a, b| a.seed.cmp(&b.seed).then_with(|| a.run_id.cmp(&b.run_id)));
            let col = |f: &dyn Fn(&SummaryRow) -> f64| g.iter().map(|r| f(r)).collect::<Vec<_>>();
            let opt = |f: &dyn Fn(&SummaryRow) -> Option<f64>| -> Option<Vec<f64>> { g.iter().map(|r| f(r)).collect() };
            let (acc, acc_se) = mean_se(&col(&|r| r.avg_final_acc));
            let (pl, pl_se) = mean_se(&col(&|r| r.plasticity));
            let fg = opt(&|r| r.forgetting).map(|v| mean_se(&v));
            let rho = opt(&|r| r.rho_mean).map(|v| mean_se(&v));
            let kappa = opt(&|r| r.kappa).map(|v| mean_se(&v).0);
            AggregateRow {
                method,
                metric: g[0].metric.clone(),
                strategy: g[0].strategy.clone(),
                budget_per_class: budget,
                kappa,
                n_seeds: g.len(),
                avg_final_acc_mean: acc,
                avg_final_acc_se: acc_se,
                forgetting_mean: fg.map(|x| x.0),
                forgetting_se: fg.and_then(|x| x.1),
                plasticity_mean: pl,
                plasticity_se: pl_se,
                rho_mean_mean: rho.map(|x| x.0),
                rho_mean_se: rho.and_then(|x| x.1),
                steps_mean: mean_se(&col(&|r| r.steps as f64)).0,
                extra_passes_mean: mean_se(&col(&|r| r.extra_passes as f64)).0,
            }
        })
        .collect()
}

pub fn read_aggregate(path: &Path) -> Result<Vec<AggregateRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    for col in AGGREGATE_COLUMNS {
        if !header.iter().any(|h| h == col) {
            bail!("{}: missing column `{col}`", path.display());
        }
    }
    r.deserialize()
        .collect::<Result<Vec<AggregateRow>, _>>()
        .with_context(|| format!("parsing {}", path.display()))
}
