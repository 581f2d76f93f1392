mod common;

use proptest::prelude::*;
use wsc_core::checkpoint::Checkpoint;
use wsc_core::nn::ParameterSet;
use wsc_core::tasks::{
    encode_idx, idx_stream_from_bytes, load_idx_stream, parse_idx, parse_idx_pair, read_stream, write_stream,
    TaskStream, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC,
};

fn bits(p: &ParameterSet<f64>) -> Vec<u64> {
    p.values().iter().map(|x| x.to_bits()).collect()
}

fn layout_strategy() -> impl Strategy<Value = Vec<Vec<usize>>> {
    prop::collection::vec(prop::collection::vec(1usize..5, 1..=3), 1..=4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn checkpoint_round_trip_preserves_every_bit(
        shapes in layout_strategy(),
        seed in any::<u64>(),
        with_avg in any::<bool>(),
        with_moments in any::<bool>(),
    ) {
        let mut rng = common::rng(seed);
        let layout: Vec<(String, Vec<usize>)> =
            shapes.iter().enumerate().map(|(i, s)| (format!("seg{i}"), s.clone())).collect();
        let random = |rng: &mut rand_chacha::ChaCha8Rng| {
            let mut p = ParameterSet::<f64>::zeros(layout.clone());
            for x in p.values_mut() {
                // Arbitrary bit patterns, including NaN payloads and subnormals.
                *x = f64::from_bits(rand::Rng::random(rng));
            }
            p
        };
        let mut ck = Checkpoint::new(random(&mut rng));
        if with_avg {
            ck.average = Some(random(&mut rng));
        }
        if with_moments {
            ck.m = Some(random(&mut rng));
            ck.v = Some(random(&mut rng));
        }
        let bytes = ck.encode().unwrap();
        prop_assert_eq!(&bytes[..4], b"WSCK");
        let back = Checkpoint::<f64>::decode(&bytes).unwrap();
        prop_assert_eq!(back.theta.segments(), ck.theta.segments());
        prop_assert_eq!(bits(&back.theta), bits(&ck.theta));
        prop_assert_eq!(back.average.as_ref().map(bits), ck.average.as_ref().map(bits));
        prop_assert_eq!(back.m.as_ref().map(bits), ck.m.as_ref().map(bits));
        prop_assert_eq!(back.v.as_ref().map(bits), ck.v.as_ref().map(bits));
        prop_assert_eq!(back.encode().unwrap(), bytes);
    }

    #[test]
    fn truncated_checkpoints_are_rejected(cut in 0usize..200) {
        let mut p = ParameterSet::<f64>::zeros([("w", vec![3, 4]), ("b", vec![4])]);
        p.values_mut().iter_mut().enumerate().for_each(|(i, x)| *x = i as f64 * 0.5);
        let bytes = Checkpoint::new(p).encode().unwrap();
        let cut = cut.min(bytes.len() - 1);
        prop_assert!(Checkpoint::<f64>::decode(&bytes[..cut]).is_err());
    }

    #[test]
    fn stream_file_round_trip_is_exact(seed in 0u64..1000, tasks in 1usize..4, classes in 2usize..4) {
        let stream = common::small_stream(seed, tasks, classes, 3, 4);
        let mut buf = Vec::new();
        write_stream(&stream, &mut buf).unwrap();
        prop_assert!(buf.starts_with(b"WSC-STREAM v1"));
        let back: TaskStream<f64> = read_stream(buf.as_slice()).unwrap();
        prop_assert_eq!(back, stream);
    }

    #[test]
    fn idx_encode_parse_round_trip(dims in prop::collection::vec(1usize..6, 1..=3), fill in any::<u8>()) {
        let len: usize = dims.iter().product();
        let data: Vec<u8> = (0..len).map(|i| (i as u8).wrapping_mul(31).wrapping_add(fill)).collect();
        let magic = 0x0000_0800 | dims.len() as u32;
        let arr = parse_idx(&encode_idx(magic, &dims, &data), magic).unwrap();
        prop_assert_eq!(arr.dims, dims);
        prop_assert_eq!(arr.data, data);
    }
}

#[test]
fn two_by_two_idx_fixture_decodes_to_known_pixels() {
    let images = [
        0x00, 0x00, 0x08, 0x03, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2, 0, 51, 102, 255, 255, 0, 0, 0,
    ];
    let labels = [0x00, 0x00, 0x08, 0x01, 0, 0, 0, 2, 7, 3];
    let (rows, labs) = parse_idx_pair::<f64>(&images, &labels).unwrap();
    assert_eq!(rows, vec![vec![0.0, 0.2, 0.4, 1.0], vec![1.0, 0.0, 0.0, 0.0]]);
    assert_eq!(labs, vec![7, 3]);
}

#[test]
fn idx_rejects_bad_magic_and_size_mismatch() {
    let good = encode_idx(IDX_IMAGES_MAGIC, &[1, 2, 2], &[1, 2, 3, 4]);
    assert!(parse_idx(&good, IDX_LABELS_MAGIC).is_err());
    assert!(parse_idx(&good[..good.len() - 1], IDX_IMAGES_MAGIC).is_err());
    let mut long = good.clone();
    long.push(0);
    assert!(parse_idx(&long, IDX_IMAGES_MAGIC).is_err());
    let labels = encode_idx(IDX_LABELS_MAGIC, &[2], &[0, 1]);
    assert!(parse_idx_pair::<f64>(&good, &labels).is_err());
}

#[test]
fn idx_stream_splits_classes_into_tasks() {
    // Four classes, five 1x2 images each.
    let n = 20;
    let pixels: Vec<u8> = (0..n * 2).map(|i| (i * 6) as u8).collect();
    let label_bytes: Vec<u8> = (0..n).map(|i| (i % 4) as u8 * 2).collect();
    let images = encode_idx(IDX_IMAGES_MAGIC, &[n, 1, 2], &pixels);
    let labels = encode_idx(IDX_LABELS_MAGIC, &[n], &label_bytes);
    let stream: TaskStream<f64> = idx_stream_from_bytes(&images, &labels, 2, 9, 0.2).unwrap();
    assert_eq!(stream.num_classes, 4);
    assert_eq!(stream.input_dim, 2);
    let mut all: Vec<usize> = stream.tasks.iter().flat_map(|t| t.class_ids.clone()).collect();
    all.sort();
    assert_eq!(all, vec![0, 1, 2, 3]);
    for t in &stream.tasks {
        assert_eq!(t.train.len(), 8);
        assert_eq!(t.test.len(), 2);
    }
    assert!(idx_stream_from_bytes::<f64>(&images, &labels, 3, 9, 0.2).is_err());

    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("img"), &images).unwrap();
    std::fs::write(dir.path().join("lab"), &labels).unwrap();
    let loaded: TaskStream<f64> = load_idx_stream(&dir.path().join("img"), &dir.path().join("lab"), 2, 9, 0.2).unwrap();
    assert_eq!(loaded, stream);
}

#[test]
fn checkpoint_files_round_trip() {
    let mut p = ParameterSet::<f64>::zeros([("w0", vec![2, 3]), ("b0", vec![3])]);
    p.values_mut().iter_mut().enumerate().for_each(|(i, x)| *x = (i as f64).sin());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.wsck");
    let ck = Checkpoint::new(p);
    ck.save(&path).unwrap();
    assert_eq!(Checkpoint::<f64>::load(&path).unwrap(), ck);
}
