//! Run configuration: a flat `key = value` text format.
//!
//! One assignment per line, `#` starts a comment, blank lines are ignored,
//! keys are dotted paths such as `reset.metric`. Lists are comma separated.
//! Every key is optional; unknown or repeated keys are rejected. The full key
//! table lives in `CONFIG.md` next to this crate's manifest.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};
use wsc_core::consolidation::{
    AvgCountMode, ConsolidationSchedule, ImportanceMetric, RankingScope, ResetConfig, ResetFrequency, ResetStrategy,
};
use wsc_core::optim::{OptimizerConfig, OptimizerKind};
use wsc_core::tasks::{SamplingMode, SyntheticStreamConfig};

/// A field-level configuration problem.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{}field `{key}`: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            line: None,
            key: key.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Wsc,
    Replay,
    Scratch,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Wsc => "wsc",
            Method::Replay => "replay",
            Method::Scratch => "scratch",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "wsc" => Ok(Method::Wsc),
            "replay" => Ok(Method::Replay),
            "scratch" => Ok(Method::Scratch),
            other => Err(format!("unknown method '{other}' (expected wsc, replay or scratch)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StreamSource {
    Synthetic(SyntheticStreamConfig),
    Idx {
        images: PathBuf,
        labels: PathBuf,
        tasks: usize,
        test_fraction: f64,
        seed: u64,
    },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    /// Name written to the `method` column; defaults to the method.
    pub label: Option<String>,
    pub seeds: Vec<u64>,
    pub budgets: Vec<usize>,
    pub batch_size: usize,
    pub stream: StreamSource,
    pub hidden: Vec<usize>,
    pub optimizer: OptimizerConfig,
    pub schedule: ConsolidationSchedule,
    pub reset: ResetConfig,
    pub sampling: SamplingMode,
    pub alignment: bool,
    pub probe_size: usize,
    pub checkpoint: bool,
    pub wall_clock: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::Wsc,
            label: None,
            seeds: vec![0],
            budgets: vec![20],
            batch_size: 64,
            stream: StreamSource::Synthetic(SyntheticStreamConfig::default()),
            hidden: vec![64],
            optimizer: OptimizerConfig::default(),
            schedule: ConsolidationSchedule::with_epochs(20),
            reset: ResetConfig::default(),
            sampling: SamplingMode::Pooled,
            alignment: true,
            probe_size: 256,
            checkpoint: true,
            wall_clock: false,
        }
    }
}

fn parse_value<V: FromStr>(key: &str, raw: &str) -> Result<V, ConfigError>
where
    V::Err: fmt::Display,
{
    raw.parse::<V>()
        .map_err(|e| ConfigError::new(key, format!("invalid value '{raw}': {e}")))
}

fn parse_list<V: FromStr>(key: &str, raw: &str) -> Result<Vec<V>, ConfigError>
where
    V::Err: fmt::Display,
{
    let items: Vec<V> = raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(ConfigError::new(key, "list must not be empty"));
    }
    Ok(items)
}

fn join<V: fmt::Display>(items: &[V]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn optimizer_kind(key: &str, raw: &str) -> Result<OptimizerKind, ConfigError> {
    match raw {
        "sgd" => Ok(OptimizerKind::Sgd),
        "adam" => Ok(OptimizerKind::Adam),
        other => Err(ConfigError::new(key, format!("unknown optimizer '{other}' (expected sgd or adam)"))),
    }
}

fn kind_str(kind: OptimizerKind) -> &'static str {
    match kind {
        OptimizerKind::Sgd => "sgd",
        OptimizerKind::Adam => "adam",
    }
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_file_with(path, &[])
    }

    /// Reads a config file, then applies `overrides` as if they replaced the
    /// file's lines for the same keys.
    pub fn from_file_with(path: impl AsRef<Path>, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("<file>", format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse_with(&text, overrides)?;
        // Relative data paths resolve against the config file.
        if let Some(dir) = path.parent() {
            let fix = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            };
            match &mut cfg.stream {
                StreamSource::Idx { images, labels, .. } => {
                    fix(images);
                    fix(labels);
                }
                StreamSource::File(p) => fix(p),
                StreamSource::Synthetic(_) => {}
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::parse_with(text, &[])
    }

    pub fn parse_with(text: &str, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut pairs: Vec<(Option<usize>, String, String)> = Vec::new();
        let mut seen = BTreeSet::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |e: ConfigError| ConfigError { line: Some(n + 1), ..e };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at(ConfigError::new(line, "expected `key = value`")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(at(ConfigError::new(key, "assigned more than once")));
            }
            pairs.push((Some(n + 1), key.to_string(), value.to_string()));
        }
        for (key, value) in overrides {
            pairs.retain(|(_, k, _)| k != key);
            pairs.push((None, key.clone(), value.clone()));
        }
        let mut cfg = Self::default();
        // Stream keys depend on the source, so settle it first.
        if let Some((line, _, v)) = pairs.iter().find(|(_, k, _)| k == "stream.source") {
            cfg.set_source(v).map_err(|e| ConfigError { line: *line, ..e })?;
        }
        let mut warm_given = false;
        for (line, key, value) in &pairs {
            if key == "stream.source" {
                continue;
            }
            warm_given |= key == "schedule.n_warm";
            cfg.set(key, value).map_err(|e| ConfigError { line: *line, ..e })?;
        }
        if !warm_given {
            cfg.schedule.n_warm = ConsolidationSchedule::with_epochs(cfg.schedule.n_iter).n_warm;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set_source(&mut self, value: &str) -> Result<(), ConfigError> {
        self.stream = match value {
            "synthetic" => StreamSource::Synthetic(SyntheticStreamConfig::default()),
            "idx" => StreamSource::Idx {
                images: PathBuf::new(),
                labels: PathBuf::new(),
                tasks: 5,
                test_fraction: 0.2,
                seed: 0,
            },
            "file" => StreamSource::File(PathBuf::new()),
            other => {
                return Err(ConfigError::new(
                    "stream.source",
                    format!("unknown source '{other}' (expected synthetic, idx or file)"),
                ))
            }
        };
        Ok(())
    }

    /// Applies one assignment. Setting `schedule.epochs` does not move `n_warm`.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        let e = |m: String| ConfigError::new(key, m);
        match key {
            "run.method" => self.method = v.parse().map_err(e)?,
            "run.label" => self.label = (!v.is_empty()).then(|| v.to_string()),
            "run.seeds" => self.seeds = parse_list(key, v)?,
            "run.budgets" => self.budgets = parse_list(key, v)?,
            "run.batch_size" => self.batch_size = parse_value(key, v)?,
            "stream.source" => self.set_source(v)?,
            "model.hidden" => {
                self.hidden = if v.is_empty() || v == "none" { Vec::new() } else { parse_list(key, v)? }
            }
            "optim.kind" => self.optimizer.kind = optimizer_kind(key, v)?,
            "optim.learning_rate" => self.optimizer.learning_rate = parse_value(key, v)?,
            "optim.momentum" => self.optimizer.sgd_momentum = parse_value(key, v)?,
            "optim.beta1" => self.optimizer.adam_beta1 = parse_value(key, v)?,
            "optim.beta2" => self.optimizer.adam_beta2 = parse_value(key, v)?,
            "optim.eps" => self.optimizer.adam_eps = parse_value(key, v)?,
            "schedule.epochs" => self.schedule.n_iter = parse_value(key, v)?,
            "schedule.n_warm" => self.schedule.n_warm = parse_value(key, v)?,
            "schedule.avg_interval" => self.schedule.avg_interval = parse_value(key, v)?,
            "schedule.avg_count_mode" => self.schedule.avg_count_mode = parse_value::<AvgCountMode>(key, v)?,
            "schedule.reset_frequency" => self.schedule.reset_frequency = parse_value::<ResetFrequency>(key, v)?,
            "schedule.averaging" => self.schedule.averaging = parse_value(key, v)?,
            "reset.metric" => self.reset.metric = parse_value::<ImportanceMetric>(key, v)?,
            "reset.retain_fraction" => self.reset.retain_fraction = parse_value(key, v)?,
            "reset.blend" => self.reset.blend = parse_value(key, v)?,
            "reset.strategy" => self.reset.strategy = parse_value::<ResetStrategy>(key, v)?,
            "reset.ranking_scope" => self.reset.ranking_scope = parse_value::<RankingScope>(key, v)?,
            "reset.exclude_unseen_head" => self.reset.exclude_unseen_head = parse_value(key, v)?,
            "reset.raw_moments" => self.reset.raw_moments = parse_value(key, v)?,
            "reset.sp_shrink" => self.reset.sp_shrink = parse_value(key, v)?,
            "reset.sp_noise_scale" => self.reset.sp_noise_scale = parse_value(key, v)?,
            "reset.cbp_reset_fraction" => self.reset.cbp_reset_fraction = parse_value(key, v)?,
            "reset.hutchinson_probes" => self.reset.hutchinson_probes = parse_value(key, v)?,
            "reset.fisher_samples" => self.reset.fisher_samples = parse_value(key, v)?,
            "sampling.mode" => {
                self.sampling = match v {
                    "pooled" => SamplingMode::Pooled,
                    "explicit" => SamplingMode::Explicit {
                        alpha: match self.sampling {
                            SamplingMode::Explicit { alpha } => alpha,
                            SamplingMode::Pooled => 0.5,
                        },
                    },
                    other => return Err(e(format!("unknown sampling mode '{other}' (expected pooled or explicit)"))),
                }
            }
            "sampling.alpha" => {
                let alpha: f64 = parse_value(key, v)?;
                self.sampling = SamplingMode::Explicit { alpha };
            }
            "eval.alignment" => self.alignment = parse_value(key, v)?,
            "eval.probe_size" => self.probe_size = parse_value(key, v)?,
            "output.checkpoint" => self.checkpoint = parse_value(key, v)?,
            "output.wall_clock" => self.wall_clock = parse_value(key, v)?,
            _ => return self.set_stream(key, v),
        }
        Ok(())
    }

    fn set_stream(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        let unknown = || ConfigError::new(key, "unknown key for this stream source");
        match &mut self.stream {
            StreamSource::Synthetic(s) => match key {
                "stream.seed" => s.seed = parse_value(key, v)?,
                "stream.tasks" => s.tasks = parse_value(key, v)?,
                "stream.classes_per_task" => s.classes_per_task = parse_value(key, v)?,
                "stream.input_dim" => s.input_dim = parse_value(key, v)?,
                "stream.train_per_class" => s.n_train_per_class = parse_value(key, v)?,
                "stream.test_per_class" => s.n_test_per_class = parse_value(key, v)?,
                "stream.separation" => s.cluster_separation = parse_value(key, v)?,
                _ => return Err(unknown()),
            },
            StreamSource::Idx {
                images,
                labels,
                tasks,
                test_fraction,
                seed,
            } => match key {
                "stream.images" => *images = PathBuf::from(v),
                "stream.labels" => *labels = PathBuf::from(v),
                "stream.tasks" => *tasks = parse_value(key, v)?,
                "stream.test_fraction" => *test_fraction = parse_value(key, v)?,
                "stream.seed" => *seed = parse_value(key, v)?,
                _ => return Err(unknown()),
            },
            StreamSource::File(p) => match key {
                "stream.path" => *p = PathBuf::from(v),
                _ => return Err(unknown()),
            },
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let core = |key: &str, r: wsc_core::Result<()>| r.map_err(|e| ConfigError::new(key, e.to_string()));
        if self.seeds.is_empty() {
            return Err(ConfigError::new("run.seeds", "at least one seed is required"));
        }
        if self.budgets.is_empty() {
            return Err(ConfigError::new("run.budgets", "at least one budget is required"));
        }
        if self.batch_size == 0 {
            return Err(ConfigError::new("run.batch_size", "must be >= 1"));
        }
        if self.probe_size == 0 {
            return Err(ConfigError::new("eval.probe_size", "must be >= 1"));
        }
        core("optim", self.optimizer.validate())?;
        core("schedule", self.schedule.validate())?;
        core("reset", self.reset.validate())?;
        if let SamplingMode::Explicit { alpha } = self.sampling {
            if !(0.0..=1.0).contains(&alpha) {
                return Err(ConfigError::new("sampling.alpha", "must lie in [0, 1]"));
            }
        }
        match &self.stream {
            StreamSource::Synthetic(s) => {
                if s.tasks == 0 || s.classes_per_task == 0 || s.input_dim == 0 || s.n_train_per_class == 0 || s.n_test_per_class == 0 {
                    return Err(ConfigError::new("stream", "synthetic sizes must be >= 1"));
                }
            }
            StreamSource::Idx { images, labels, tasks, test_fraction, .. } => {
                if images.as_os_str().is_empty() {
                    return Err(ConfigError::new("stream.images", "path required for idx source"));
                }
                if labels.as_os_str().is_empty() {
                    return Err(ConfigError::new("stream.labels", "path required for idx source"));
                }
                if *tasks == 0 {
                    return Err(ConfigError::new("stream.tasks", "must be >= 1"));
                }
                if !(*test_fraction > 0.0 && *test_fraction < 1.0) {
                    return Err(ConfigError::new("stream.test_fraction", "must lie in (0, 1)"));
                }
            }
            StreamSource::File(p) => {
                if p.as_os_str().is_empty() {
                    return Err(ConfigError::new("stream.path", "path required for file source"));
                }
            }
        }
        Ok(())
    }

    /// Name written to the `method` column.
    pub fn display_label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.method.to_string())
    }

    /// Every setting as `(key, value)` in a fixed order. Parsing the
    /// rendered lines yields this configuration again.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: String| out.push((k.to_string(), v));
        put("run.method", self.method.to_string());
        put("run.label", self.label.clone().unwrap_or_default());
        put("run.seeds", join(&self.seeds));
        put("run.budgets", join(&self.budgets));
        put("run.batch_size", self.batch_size.to_string());
        match &self.stream {
            StreamSource::Synthetic(s) => {
                put("stream.source", "synthetic".into());
                put("stream.seed", s.seed.to_string());
                put("stream.tasks", s.tasks.to_string());
                put("stream.classes_per_task", s.classes_per_task.to_string());
                put("stream.input_dim", s.input_dim.to_string());
                put("stream.train_per_class", s.n_train_per_class.to_string());
                put("stream.test_per_class", s.n_test_per_class.to_string());
                put("stream.separation", format!("{:?}", s.cluster_separation));
            }
            StreamSource::Idx {
                images,
                labels,
                tasks,
                test_fraction,
                seed,
            } => {
                put("stream.source", "idx".into());
                put("stream.images", images.display().to_string());
                put("stream.labels", labels.display().to_string());
                put("stream.tasks", tasks.to_string());
                put("stream.test_fraction", format!("{test_fraction:?}"));
                put("stream.seed", seed.to_string());
            }
            StreamSource::File(p) => {
                put("stream.source", "file".into());
                put("stream.path", p.display().to_string());
            }
        }
        put("model.hidden", if self.hidden.is_empty() { "none".into() } else { join(&self.hidden) });
        let o = &self.optimizer;
        put("optim.kind", kind_str(o.kind).into());
        put("optim.learning_rate", format!("{:?}", o.learning_rate));
        put("optim.momentum", format!("{:?}", o.sgd_momentum));
        put("optim.beta1", format!("{:?}", o.adam_beta1));
        put("optim.beta2", format!("{:?}", o.adam_beta2));
        put("optim.eps", format!("{:?}", o.adam_eps));
        let s = &self.schedule;
        put("schedule.epochs", s.n_iter.to_string());
        put("schedule.n_warm", s.n_warm.to_string());
        put("schedule.avg_interval", s.avg_interval.to_string());
        put("schedule.avg_count_mode", s.avg_count_mode.to_string());
        put("schedule.reset_frequency", s.reset_frequency.to_string());
        put("schedule.averaging", s.averaging.to_string());
        let r = &self.reset;
        put("reset.metric", r.metric.to_string());
        put("reset.retain_fraction", format!("{:?}", r.retain_fraction));
        put("reset.blend", format!("{:?}", r.blend));
        put("reset.strategy", r.strategy.to_string());
        put("reset.ranking_scope", r.ranking_scope.to_string());
        put("reset.exclude_unseen_head", r.exclude_unseen_head.to_string());
        put("reset.raw_moments", r.raw_moments.to_string());
        put("reset.sp_shrink", format!("{:?}", r.sp_shrink));
        put("reset.sp_noise_scale", format!("{:?}", r.sp_noise_scale));
        put("reset.cbp_reset_fraction", format!("{:?}", r.cbp_reset_fraction));
        put("reset.hutchinson_probes", r.hutchinson_probes.to_string());
        put("reset.fisher_samples", r.fisher_samples.to_string());
        match self.sampling {
            SamplingMode::Pooled => put("sampling.mode", "pooled".into()),
            SamplingMode::Explicit { alpha } => {
                put("sampling.mode", "explicit".into());
                put("sampling.alpha", format!("{alpha:?}"));
            }
        }
        put("eval.alignment", self.alignment.to_string());
        put("eval.probe_size", self.probe_size.to_string());
        put("output.checkpoint", self.checkpoint.to_string());
        put("output.wall_clock", self.wall_clock.to_string());
        out
    }

    pub fn render(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Identifier of one `(config, budget, seed)` run: a hash over every
    /// setting that can change results. Seed and budget lists are replaced by
    /// the single values, output switches are left out.
    pub fn run_id(&self, budget: usize, seed: u64) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.entries() {
            if matches!(k.as_str(), "run.seeds" | "run.budgets") || k.starts_with("output.") {
                continue;
            }
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        h.update(format!("budget={budget}\nseed={seed}\n").as_bytes());
        let digest = h.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}
