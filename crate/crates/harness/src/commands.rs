//! Subcommand implementations shared by the binary and the tests.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use wsc_core::tasks::write_stream;
use wsc_core::Stream;

use crate::ablate::{variants, Suite};
use crate::config::RunConfig;
use crate::experiment::{load_stream, run_continual, RunRecord};
use crate::output::{aggregate, write_epoch_lines, write_rows, write_run_artifacts, write_summary, SummaryRow};
use crate::report::render_report;

/// One `(config, budget, seed)` unit of work.
#[derive(Debug, Clone)]
pub struct Job {
    pub config: RunConfig,
    pub budget: usize,
    pub seed: u64,
}

pub fn jobs_for(cfg: &RunConfig) -> Vec<Job> {
    let mut jobs = Vec::new();
    for &budget in &cfg.budgets {
        for &seed in &cfg.seeds {
            jobs.push(Job {
                config: cfg.clone(),
                budget,
                seed,
            });
        }
    }
    jobs
}

fn run_job(job: &Job, stream: &Stream, out: &Path) -> Result<RunRecord> {
    let id = job.config.run_id(job.budget, job.seed);
    let dir = out.join("runs").join(&id);
    fs::create_dir_all(&dir)?;
    let status = dir.join("status");
    fs::write(&status, "incomplete\n")?;
    let mut log = BufWriter::new(fs::File::create(dir.join("epochs.jsonl"))?);
    let result = run_continual(&job.config, stream, job.budget, job.seed, |task| {
        write_epoch_lines(&mut log, task)?;
        log.flush()?;
        Ok(())
    });
    match result {
        Ok(rec) => {
            write_run_artifacts(&dir, &rec, &job.config)?;
            fs::write(&status, "complete\n")?;
            Ok(rec)
        }
        Err(e) => {
            fs::write(&status, format!("incomplete\n{e:#}\n"))?;
            Err(e.context(format!("run {id} (budget {}, seed {})", job.budget, job.seed)))
        }
    }
}

/// Executes jobs on `parallel` worker threads. Results come back in job
/// order; a failure in one job does not stop the others.
pub fn execute(jobs: &[Job], stream: &Stream, out: &Path, parallel: usize) -> Result<Vec<Result<RunRecord>>> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(parallel.max(1)).build()?;
    Ok(pool.install(|| jobs.par_iter().map(|job| run_job(job, stream, out)).collect()))
}

/// Writes the summary of finished runs, then reports the first failure if any.
fn summarize(jobs: &[Job], results: Vec<Result<RunRecord>>, path: &Path) -> Result<Vec<SummaryRow>> {
    let mut rows = Vec::new();
    let mut first_err = None;
    for (job, res) in jobs.iter().zip(results) {
        match res {
            Ok(rec) => rows.push(SummaryRow::from_record(&rec, &job.config)),
            Err(e) => {
                eprintln!("error: {e:#}");
                first_err.get_or_insert(e);
            }
        }
    }
    write_summary(path, &rows)?;
    match first_err {
        Some(e) => Err(e),
        None => Ok(rows),
    }
}

pub fn cmd_run(cfg: &RunConfig, out: &Path, parallel: usize) -> Result<Vec<SummaryRow>> {
    let stream = load_stream(cfg)?;
    let jobs = jobs_for(cfg);
    let results = execute(&jobs, &stream, out, parallel)?;
    summarize(&jobs, results, &out.join(crate::output::SUMMARY_FILE))
}

pub fn cmd_sweep(cfg: &RunConfig, out: &Path, parallel: usize) -> Result<Vec<SummaryRow>> {
    if cfg.budgets.len() < 2 {
        bail!("a sweep needs at least two budgets in run.budgets");
    }
    let rows = cmd_run(cfg, out, parallel)?;
    write_rows(&out.join(crate::output::AGGREGATE_FILE), &aggregate(&rows))?;
    Ok(rows)
}

/// Runs the requested suites; writes `<suite>_summary.csv` and
/// `<suite>_aggregate.csv` for each.
pub fn cmd_ablate(base: &RunConfig, out: &Path, suites: &[Suite], parallel: usize) -> Result<()> {
    let stream = load_stream(base)?;
    let mut failure = None;
    for &suite in suites {
        let jobs: Vec<Job> = variants(base, suite).iter().flat_map(jobs_for).collect();
        let results = execute(&jobs, &stream, out, parallel)?;
        match summarize(&jobs, results, &out.join(format!("{suite}_summary.csv"))) {
            Ok(rows) => write_rows(&out.join(format!("{suite}_aggregate.csv")), &aggregate(&rows))?,
            Err(e) => {
                failure.get_or_insert(e);
            }
        }
    }
    failure.map_or(Ok(()), Err)
}

/// Aggregate files in `dir`, sorted by name.
pub fn aggregate_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with("aggregate.csv"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Renders every aggregate file in `dir` into one markdown document.
pub fn cmd_report(dir: &Path) -> Result<String> {
    let files = aggregate_files(dir)?;
    if files.is_empty() {
        bail!("no *aggregate.csv files in {}", dir.display());
    }
    let mut doc = String::from("# Results\n");
    for f in &files {
        let rows = crate::output::read_aggregate(f)?;
        let title = f
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| anyhow!("bad file name {}", f.display()))?;
        doc.push('\n');
        doc.push_str(&render_report(title, &rows));
    }
    Ok(doc)
}

pub fn cmd_gen_data(cfg: &RunConfig, out: &Path) -> Result<()> {
    let stream = load_stream(cfg)?;
    if let Some(parent) = out.parent() {
        fs::create_dir_all(parent)?;
    }
    let f = fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
    let mut w = BufWriter::new(f);
    write_stream(&stream, &mut w)?;
    w.flush()?;
    Ok(())
}
