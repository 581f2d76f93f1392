use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::nn::{Batch, ClassMask, Tensor};
use crate::rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample<T> {
    pub features: Vec<T>,
    pub label: usize,
    pub source_task: usize,
}

/// One task of a class-incremental stream (train/test splits over its classes).
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec<T> {
    pub task_id: usize,
    pub class_ids: Vec<usize>,
    pub train: Vec<LabeledExample<T>>,
    pub test: Vec<LabeledExample<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskStream<T> {
    pub tasks: Vec<TaskSpec<T>>,
    pub num_classes: usize,
    pub input_dim: usize,
}

impl<T: Scalar> TaskStream<T> {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Checks class disjointness, coverage of `0..num_classes` and label/feature consistency.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (t, task) in self.tasks.iter().enumerate() {
            if task.task_id != t {
                return Err(Error::Config(format!("task at position {t} has id {}", task.task_id)));
            }
            for &c in &task.class_ids {
                if !seen.insert(c) {
                    return Err(Error::Config(format!("class {c} appears in more than one task")));
                }
            }
            for ex in task.train.iter().chain(&task.test) {
                if !task.class_ids.contains(&ex.label) {
                    return Err(Error::Config(format!("task {t} holds an example of foreign class {}", ex.label)));
                }
                if ex.features.len() != self.input_dim {
                    return Err(Error::Shape(format!(
                        "example of width {} in a stream of width {}",
                        ex.features.len(),
                        self.input_dim
                    )));
                }
                if ex.source_task != t {
                    return Err(Error::Config(format!("example in task {t} claims source task {}", ex.source_task)));
                }
            }
        }
        if seen.len() != self.num_classes || seen.iter().next_back().is_some_and(|&c| c >= self.num_classes) {
            return Err(Error::Config(format!(
                "task classes do not cover 0..{}",
                self.num_classes
            )));
        }
        Ok(())
    }

    /// Classes introduced by tasks `0..=t`.
    pub fn seen_mask(&self, t: usize) -> ClassMask {
        ClassMask::from_classes(
            self.num_classes,
            self.tasks[..=t].iter().flat_map(|task| task.class_ids.iter().copied()),
        )
    }

    /// Classes introduced strictly before task `t`.
    pub fn classes_before(&self, t: usize) -> BTreeSet<usize> {
        self.tasks[..t].iter().flat_map(|task| task.class_ids.iter().copied()).collect()
    }

    pub fn train_len_before(&self, t: usize) -> usize {
        self.tasks[..t].iter().map(|task| task.train.len()).sum()
    }
}

/// Builds a batch from borrowed examples.
pub fn examples_to_batch<'a, T: Scalar>(
    examples: impl IntoIterator<Item = &'a LabeledExample<T>>,
    input_dim: usize,
) -> Result<Batch<T>> {
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut task_ids = Vec::new();
    for ex in examples {
        if ex.features.len() != input_dim {
            return Err(Error::Shape(format!(
                "example width {} differs from {input_dim}",
                ex.features.len()
            )));
        }
        data.extend_from_slice(&ex.features);
        labels.push(ex.label);
        task_ids.push(ex.source_task);
    }
    Batch::new(Tensor::new(vec![labels.len(), input_dim], data)?, labels, task_ids)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticStreamConfig {
    pub seed: u64,
    pub tasks: usize,
    pub classes_per_task: usize,
    pub input_dim: usize,
    pub n_train_per_class: usize,
    pub n_test_per_class: usize,
    pub cluster_separation: f64,
}

impl Default for SyntheticStreamConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            tasks: 10,
            classes_per_task: 10,
            input_dim: 16,
            n_train_per_class: 500,
            n_test_per_class: 100,
            cluster_separation: 6.0,
        }
    }
}

/// Isotropic unit-variance Gaussian clusters, one per class, with means drawn
/// uniformly on a sphere of radius `cluster_separation`. Task `t` owns classes
/// `t*k .. (t+1)*k`.
pub fn gen_synthetic_stream<T: Scalar>(cfg: &SyntheticStreamConfig) -> Result<TaskStream<T>> {
    if cfg.tasks == 0 || cfg.classes_per_task == 0 || cfg.input_dim == 0 || cfg.n_train_per_class == 0 {
        return Err(Error::Config("synthetic stream counts must be >= 1".into()));
    }
    if !(cfg.cluster_separation.is_finite() && cfg.cluster_separation >= 0.0) {
        return Err(Error::Config("cluster_separation must be finite and >= 0".into()));
    }
    let num_classes = cfg.tasks * cfg.classes_per_task;
    if num_classes < 2 {
        return Err(Error::Config("a stream needs at least two classes".into()));
    }
    let mut means_rng = rng::stream(cfg.seed, 0, "synthetic-means");
    let means: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| {
            let dir: Vec<f64> = (0..cfg.input_dim).map(|_| StandardNormal.sample(&mut means_rng)).collect();
            let n = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            dir.into_iter().map(|x| x / n * cfg.cluster_separation).collect()
        })
        .collect();

    let mut tasks = Vec::with_capacity(cfg.tasks);
    for t in 0..cfg.tasks {
        let class_ids: Vec<usize> = (t * cfg.classes_per_task..(t + 1) * cfg.classes_per_task).collect();
        let draw = |split: &str, per_class: usize| -> Vec<LabeledExample<T>> {
            let mut out = Vec::with_capacity(per_class * class_ids.len());
            for &c in &class_ids {
                let mut r = rng::stream(cfg.seed, c as u64, split);
                for _ in 0..per_class {
                    let features = means[c]
                        .iter()
                        .map(|&mu| {
                            let z: f64 = StandardNormal.sample(&mut r);
                            T::lit(mu + z)
                        })
                        .collect();
                    out.push(LabeledExample {
                        features,
                        label: c,
                        source_task: t,
                    });
                }
            }
            out
        };
        let train = draw("synthetic-train", cfg.n_train_per_class);
        let test = draw("synthetic-test", cfg.n_test_per_class);
        tasks.push(TaskSpec {
            task_id: t,
            class_ids,
            train,
            test,
        });
    }
    Ok(TaskStream {
        tasks,
        num_classes,
        input_dim: cfg.input_dim,
    })
}

pub const STREAM_MAGIC: &str = "WSC-STREAM v1";

/// Writes the text stream format.
///
/// ```text
/// WSC-STREAM v1
/// #meta tasks=2 classes=4 input_dim=3
/// #task 0 classes=0,1
/// #task 1 classes=2,3
/// #split train
/// 0,1,0.25,-1.5,3
/// #split test
/// 1,3,...
/// ```
///
/// Data rows are `task,label,f0,...,fD`; floats use the shortest representation
/// that parses back to the same `f64`.
pub fn write_stream<T: Scalar, W: Write>(stream: &TaskStream<T>, mut w: W) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{STREAM_MAGIC}").unwrap();
    writeln!(
        out,
        "#meta tasks={} classes={} input_dim={}",
        stream.tasks.len(),
        stream.num_classes,
        stream.input_dim
    )
    .unwrap();
    for task in &stream.tasks {
        let ids: Vec<String> = task.class_ids.iter().map(|c| c.to_string()).collect();
        writeln!(out, "#task {} classes={}", task.task_id, ids.join(",")).unwrap();
    }
    for (split, pick) in [("train", 0), ("test", 1)] {
        writeln!(out, "#split {split}").unwrap();
        for task in &stream.tasks {
            let examples = if pick == 0 { &task.train } else { &task.test };
            for ex in examples {
                write!(out, "{},{}", ex.source_task, ex.label).unwrap();
                for f in &ex.features {
                    write!(out, ",{}", f.to_f64_lossy()).unwrap();
                }
                out.push('\n');
            }
        }
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

fn kv<'a>(tok: &'a str, key: &str, line_no: usize) -> Result<&'a str> {
    tok.strip_prefix(key)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| Error::Config(format!("stream line {line_no}: expected {key}=...")))
}

fn parse_num<N: std::str::FromStr>(s: &str, line_no: usize) -> Result<N> {
    s.trim()
        .parse()
        .map_err(|_| Error::Config(format!("stream line {line_no}: cannot parse '{s}'")))
}

pub fn read_stream<T: Scalar, R: Read>(r: R) -> Result<TaskStream<T>> {
    let reader = BufReader::new(r);
    let mut lines = reader.lines().enumerate();
    match lines.next() {
        Some((_, Ok(l))) if l.trim_end() == STREAM_MAGIC => {}
        _ => return Err(Error::Config(format!("stream file must start with '{STREAM_MAGIC}'"))),
    }
    let mut meta: Option<(usize, usize, usize)> = None;
    let mut tasks: Vec<TaskSpec<T>> = Vec::new();
    let mut split: Option<bool> = None; // Some(true) = train
    for (i, line) in lines {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("#meta ") {
            let toks: Vec<&str> = rest.split_whitespace().collect();
            if toks.len() != 3 {
                return Err(Error::Config(format!("stream line {line_no}: malformed #meta")));
            }
            let n_tasks: usize = parse_num(kv(toks[0], "tasks", line_no)?, line_no)?;
            let classes = parse_num(kv(toks[1], "classes", line_no)?, line_no)?;
            let dim = parse_num(kv(toks[2], "input_dim", line_no)?, line_no)?;
            meta = Some((n_tasks, classes, dim));
            tasks = (0..n_tasks)
                .map(|t| TaskSpec {
                    task_id: t,
                    class_ids: Vec::new(),
                    train: Vec::new(),
                    test: Vec::new(),
                })
                .collect();
        } else if let Some(rest) = line.strip_prefix("#task ") {
            let (id, classes) = rest
                .split_once(' ')
                .ok_or_else(|| Error::Config(format!("stream line {line_no}: malformed #task")))?;
            let t: usize = parse_num(id, line_no)?;
            let list = kv(classes, "classes", line_no)?;
            let ids = list
                .split(',')
                .filter(|s| !s.is_empty())
                .map(|s| parse_num(s, line_no))
                .collect::<Result<Vec<usize>>>()?;
            tasks
                .get_mut(t)
                .ok_or_else(|| Error::Config(format!("stream line {line_no}: task {t} out of range")))?
                .class_ids = ids;
        } else if let Some(rest) = line.strip_prefix("#split ") {
            split = match rest.trim() {
                "train" => Some(true),
                "test" => Some(false),
                other => return Err(Error::Config(format!("stream line {line_no}: unknown split '{other}'"))),
            };
        } else if line.starts_with('#') {
            continue;
        } else {
            let (_, _, dim) = meta.ok_or_else(|| Error::Config("stream rows before #meta".into()))?;
            let train = split.ok_or_else(|| Error::Config(format!("stream line {line_no}: row outside a #split")))?;
            let mut fields = line.split(',');
            let t: usize = parse_num(fields.next().unwrap_or(""), line_no)?;
            let label: usize = parse_num(
                fields
                    .next()
                    .ok_or_else(|| Error::Config(format!("stream line {line_no}: missing label")))?,
                line_no,
            )?;
            let features = fields
                .map(|f| parse_num::<f64>(f, line_no).map(T::lit))
                .collect::<Result<Vec<T>>>()?;
            if features.len() != dim {
                return Err(Error::Shape(format!(
                    "stream line {line_no}: {} features, expected {dim}",
                    features.len()
                )));
            }
            let task = tasks
                .get_mut(t)
                .ok_or_else(|| Error::Config(format!("stream line {line_no}: task {t} out of range")))?;
            let ex = LabeledExample {
                features,
                label,
                source_task: t,
            };
            if train {
                task.train.push(ex);
            } else {
                task.test.push(ex);
            }
        }
    }
    let (_, num_classes, input_dim) = meta.ok_or_else(|| Error::Config("stream file has no #meta line".into()))?;
    let stream = TaskStream {
        tasks,
        num_classes,
        input_dim,
    };
    stream.validate()?;
    Ok(stream)
}
