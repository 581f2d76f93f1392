//! IDX (MNIST-style) unsigned-byte arrays.
//!
//! Layout: two zero bytes, a type byte (`0x08` = unsigned byte), a rank byte,
//! `rank` big-endian `u32` dimensions, then the raw payload in row-major order.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;

use super::stream::{LabeledExample, TaskSpec, TaskStream};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::format(at as u64, "truncated header"))
}

/// Parses an unsigned-byte IDX array whose magic must equal `expected_magic`.
pub fn parse_idx(bytes: &[u8], expected_magic: u32) -> Result<IdxArray> {
    let magic = be_u32(bytes, 0)?;
    if magic != expected_magic {
        return Err(Error::format(
            0,
            format!("bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}"),
        ));
    }
    let rank = (magic & 0xff) as usize;
    let dims = (0..rank)
        .map(|k| be_u32(bytes, 4 + 4 * k).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let header = 4 + 4 * rank;
    let len: usize = dims.iter().product();
    let payload = &bytes[header.min(bytes.len())..];
    if payload.len() < len {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated payload: {} of {len} bytes", payload.len()),
        ));
    }
    if payload.len() > len {
        return Err(Error::format(
            (header + len) as u64,
            format!("{} trailing bytes after payload", payload.len() - len),
        ));
    }
    Ok(IdxArray {
        dims,
        data: payload.to_vec(),
    })
}

/// Pixels scaled to `[0, 1]`, one row per image, and labels.
pub fn parse_idx_pair<T: Scalar>(images: &[u8], labels: &[u8]) -> Result<(Vec<Vec<T>>, Vec<u8>)> {
    let img = parse_idx(images, IDX_IMAGES_MAGIC)?;
    let lab = parse_idx(labels, IDX_LABELS_MAGIC)?;
    let n = img.dims[0];
    if lab.dims[0] != n {
        return Err(Error::format(
            4,
            format!("labels file holds {} entries but images file holds {n}", lab.dims[0]),
        ));
    }
    let width = img.dims[1] * img.dims[2];
    let scale = T::one() / T::lit(255.0);
    let rows = if width == 0 {
        vec![Vec::new(); n]
    } else {
        img.data
            .chunks_exact(width)
            .map(|px| px.iter().map(|&b| T::lit(b as f64) * scale).collect())
            .collect()
    };
    Ok((rows, lab.data))
}

/// Loads an IDX image/label pair as a `tasks`-task class-incremental stream.
///
/// Distinct labels are sorted ascending, cut into `tasks` equal consecutive
/// groups, and the group-to-task order is shuffled with `seed`. Within each
/// class a seeded `test_fraction` of the examples is held out for evaluation.
/// Labels are renumbered densely in ascending order.
pub fn load_idx_stream<T: Scalar>(
    images_path: &Path,
    labels_path: &Path,
    tasks: usize,
    seed: u64,
    test_fraction: f64,
) -> Result<TaskStream<T>> {
    let images = std::fs::read(images_path)?;
    let labels = std::fs::read(labels_path)?;
    idx_stream_from_bytes(&images, &labels, tasks, seed, test_fraction)
}

pub fn idx_stream_from_bytes<T: Scalar>(
    images: &[u8],
    labels: &[u8],
    tasks: usize,
    seed: u64,
    test_fraction: f64,
) -> Result<TaskStream<T>> {
    if tasks == 0 {
        return Err(Error::Config("tasks must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::Config("test_fraction must be in [0, 1)".into()));
    }
    let (rows, labels) = parse_idx_pair::<T>(images, labels)?;
    let input_dim = rows.first().map(|r| r.len()).unwrap_or(0);
    let distinct: BTreeSet<u8> = labels.iter().copied().collect();
    let dense: BTreeMap<u8, usize> = distinct.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    let num_classes = dense.len();
    if !num_classes.is_multiple_of(tasks) || num_classes < tasks {
        return Err(Error::Config(format!(
            "{num_classes} classes cannot be split into {tasks} equal tasks"
        )));
    }
    let per_task = num_classes / tasks;
    let mut groups: Vec<Vec<usize>> = (0..tasks).map(|g| (g * per_task..(g + 1) * per_task).collect()).collect();
    groups.shuffle(&mut rng::stream(seed, 0, "idx-task-order"));

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, l) in labels.iter().enumerate() {
        by_class[dense[l]].push(i);
    }

    let mut out = Vec::with_capacity(tasks);
    for (t, class_ids) in groups.into_iter().enumerate() {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for &c in &class_ids {
            let mut idx = by_class[c].clone();
            idx.shuffle(&mut rng::stream(seed, c as u64, "idx-split"));
            let n_test = (idx.len() as f64 * test_fraction).floor() as usize;
            for (k, &i) in idx.iter().enumerate() {
                let ex = LabeledExample {
                    features: rows[i].clone(),
                    label: c,
                    source_task: t,
                };
                if k < n_test {
                    test.push(ex);
                } else {
                    train.push(ex);
                }
            }
        }
        out.push(TaskSpec {
            task_id: t,
            class_ids,
            train,
            test,
        });
    }
    let stream = TaskStream {
        tasks: out,
        num_classes,
        input_dim,
    };
    stream.validate()?;
    Ok(stream)
}

/// Serializes an unsigned-byte IDX array.
pub fn encode_idx(magic: u32, dims: &[usize], data: &[u8]) -> Vec<u8> {
    let mut out = magic.to_be_bytes().to_vec();
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(data);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_two_by_two_file() {
        let bytes = [0u8, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2, 0, 51, 102, 255, 255, 0, 0, 0];
        let arr = parse_idx(&bytes, IDX_IMAGES_MAGIC).unwrap();
        assert_eq!(arr.dims, vec![2, 2, 2]);
        let labels = encode_idx(IDX_LABELS_MAGIC, &[2], &[1, 0]);
        let (rows, labs) = parse_idx_pair::<f64>(&bytes, &labels).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0], vec![0.0, 0.2, 0.4, 1.0]);
        assert_eq!(rows[1], vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(labs, vec![1, 0]);
    }

    #[test]
    fn bad_magic_reports_offset_zero() {
        let bytes = encode_idx(0x0000_0802, &[1, 1], &[0]);
        match parse_idx(&bytes, IDX_IMAGES_MAGIC) {
            Err(Error::Format { offset: 0, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn truncated_payload_is_a_format_error() {
        let mut bytes = encode_idx(IDX_IMAGES_MAGIC, &[2, 2, 2], &[0; 8]);
        bytes.pop();
        match parse_idx(&bytes, IDX_IMAGES_MAGIC) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, bytes.len() as u64),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_idx(&bytes[..6], IDX_IMAGES_MAGIC),
            Err(Error::Format { offset: 4, .. })
        ));
    }

    #[test]
    fn label_count_mismatch() {
        let images = encode_idx(IDX_IMAGES_MAGIC, &[2, 1, 1], &[0, 1]);
        let labels = encode_idx(IDX_LABELS_MAGIC, &[3], &[0, 1, 1]);
        assert!(matches!(parse_idx_pair::<f64>(&images, &labels), Err(Error::Format { .. })));
    }

    #[test]
    fn ten_classes_five_tasks() {
        let n = 10 * 7;
        let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
        let pixels: Vec<u8> = (0..n * 4).map(|i| (i % 256) as u8).collect();
        let images = encode_idx(IDX_IMAGES_MAGIC, &[n, 2, 2], &pixels);
        let labels = encode_idx(IDX_LABELS_MAGIC, &[n], &labels);
        let s: TaskStream<f64> = idx_stream_from_bytes(&images, &labels, 5, 9, 0.3).unwrap();
        assert_eq!(s.len(), 5);
        assert_eq!(s.num_classes, 10);
        let total: usize = s.tasks.iter().map(|t| t.train.len() + t.test.len()).sum();
        assert_eq!(total, n);
        for t in &s.tasks {
            assert_eq!(t.class_ids.len(), 2);
            // Groups are consecutive class ids.
            assert_eq!(t.class_ids[1], t.class_ids[0] + 1);
            assert_eq!(t.test.len(), 2 * 2);
        }
    }
}
