use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use wsc_harness::ablate::Suite;
use wsc_harness::commands::{cmd_ablate, cmd_gen_data, cmd_report, cmd_run, cmd_sweep};
use wsc_harness::{ConfigError, RunConfig};

#[derive(Parser)]
#[command(name = "wsc", version, about = "Continual-learning runs with weight-space consolidation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Materialize the configured task stream as a WSC-STREAM v1 file.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Run every (budget, seed) of a config and write summary.csv.
    Run(RunArgs),
    /// Like `run`, over at least two budgets, plus aggregate.csv.
    Sweep(RunArgs),
    /// Component, importance-metric and reset-strategy ablations.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated subset of components,metrics,strategies.
        #[arg(long, value_delimiter = ',', default_value = "components,metrics,strategies")]
        suite: Vec<Suite>,
    },
    /// Markdown tables from the aggregate files in a results directory.
    Report {
        results: PathBuf,
        /// Output file (defaults to <results>/report.md).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides run.seeds, e.g. 0,1,2.
    #[arg(long)]
    seeds: Option<String>,
    /// Overrides run.budgets (per-class exemplar counts), e.g. 20,80,200.
    #[arg(long)]
    budget: Option<String>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    /// Overrides schedule.avg_count_mode (paper or snapshots).
    #[arg(long)]
    avg_count_mode: Option<String>,
    /// Any other key, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn overrides(set: &[String]) -> Result<Vec<(String, String)>, ConfigError> {
    set.iter()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| ConfigError::new(kv.as_str(), "expected KEY=VALUE"))
        })
        .collect()
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig, ConfigError> {
        let mut o = Vec::new();
        if let Some(s) = &self.seeds {
            o.push(("run.seeds".to_string(), s.clone()));
        }
        if let Some(b) = &self.budget {
            o.push(("run.budgets".to_string(), b.clone()));
        }
        if let Some(m) = &self.avg_count_mode {
            o.push(("schedule.avg_count_mode".to_string(), m.clone()));
        }
        o.extend(overrides(&self.set)?);
        RunConfig::from_file_with(&self.config, &o)
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { config, out, set } => {
            let cfg = RunConfig::from_file_with(&config, &overrides(&set)?)?;
            cmd_gen_data(&cfg, &out)
        }
        Command::Run(a) => cmd_run(&a.load()?, &a.out, a.parallel).map(drop),
        Command::Sweep(a) => cmd_sweep(&a.load()?, &a.out, a.parallel).map(drop),
        Command::Ablate { run, suite } => cmd_ablate(&run.load()?, &run.out, &suite, run.parallel),
        Command::Report { results, out } => {
            let doc = cmd_report(&results)?;
            let out = out.unwrap_or_else(|| results.join("report.md"));
            std::fs::write(&out, &doc).with_context(|| format!("writing {}", out.display()))?;
            print!("{doc}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<ConfigError>().is_some() => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
