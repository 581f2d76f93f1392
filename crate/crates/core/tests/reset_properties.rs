use proptest::prelude::*;
use wsc_core::consolidation::{
    alt_reset, find_dormant_params, reset_count, soft_reset, ImportanceMetric, ImportanceVector, RankingScope,
    ResetConfig, ResetStrategy,
};
use wsc_core::nn::{init_params, Batch, NetworkSpec, ParameterSet, Tensor};
use wsc_core::rng;

fn layout(sizes: &[usize]) -> ParameterSet<f64> {
    ParameterSet::zeros(sizes.iter().enumerate().map(|(i, &n)| (format!("s{i}"), vec![n])))
}

fn filled(sizes: &[usize], vals: &[f64]) -> ParameterSet<f64> {
    let p = layout(sizes);
    p.with_values(vals[..p.len()].to_vec()).unwrap()
}

fn cfg(q: f64, scope: RankingScope) -> ResetConfig {
    ResetConfig {
        retain_fraction: q,
        ranking_scope: scope,
        ..ResetConfig::default()
    }
}

/// Full sort of `(score, index)`; take the first `k`.
fn sort_oracle(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap().then(a.cmp(&b)));
    let mut out = idx[..k].to_vec();
    out.sort_unstable();
    out
}

fn arb_case() -> impl Strategy<Value = (Vec<usize>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    prop::collection::vec(1usize..12, 1..5).prop_flat_map(|sizes| {
        let n: usize = sizes.iter().sum();
        (
            Just(sizes),
            prop::collection::vec(0.0f64..10.0, n),
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(-5.0f64..5.0, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn global_scope_matches_full_sort((sizes, scores, _, _) in arb_case(), q in 0.0f64..=1.0) {
        let p = layout(&sizes);
        let iv = ImportanceVector { scores: scores.clone(), metric: ImportanceMetric::Moment };
        let got = find_dormant_params(&iv, &cfg(q, RankingScope::Global), p.segments(), None).unwrap();
        let k = reset_count(q, scores.len());
        prop_assert_eq!(got, sort_oracle(&scores, k));
    }

    #[test]
    fn per_layer_scope_is_exact_and_local((sizes, scores, _, _) in arb_case(), q in 0.0f64..=1.0) {
        let p = layout(&sizes);
        let iv = ImportanceVector { scores: scores.clone(), metric: ImportanceMetric::Moment };
        let got = find_dormant_params(&iv, &cfg(q, RankingScope::PerLayer), p.segments(), None).unwrap();
        prop_assert_eq!(got.len(), reset_count(q, scores.len()));
        // Within each segment the picked set is that segment's lowest scores.
        for seg in p.segments() {
            let r = seg.range();
            let local: Vec<usize> = got.iter().copied().filter(|i| r.contains(i)).map(|i| i - r.start).collect();
            prop_assert_eq!(&local, &sort_oracle(&scores[r.clone()], local.len()));
        }
    }

    #[test]
    fn dormant_set_size_is_exact((sizes, scores, _, _) in arb_case(), q in 0.0f64..=1.0, mask_bits in any::<u64>()) {
        let p = layout(&sizes);
        let eligible: Vec<bool> = (0..scores.len()).map(|i| mask_bits >> (i % 64) & 1 == 1).collect();
        let e = eligible.iter().filter(|&&b| b).count();
        let iv = ImportanceVector { scores, metric: ImportanceMetric::Moment };
        for scope in [RankingScope::Global, RankingScope::PerLayer] {
            let got = find_dormant_params(&iv, &cfg(q, scope), p.segments(), Some(&eligible)).unwrap();
            prop_assert_eq!(got.len(), ((1.0 - q) * e as f64 + 1e-9).floor() as usize);
            prop_assert!(got.iter().all(|&i| eligible[i]));
        }
    }

    #[test]
    fn keep_all_is_a_no_op((sizes, scores, theta, prev) in arb_case()) {
        let p = layout(&sizes);
        let iv = ImportanceVector { scores, metric: ImportanceMetric::Moment };
        let picked = find_dormant_params(&iv, &cfg(1.0, RankingScope::Global), p.segments(), None).unwrap();
        prop_assert!(picked.is_empty());
        let mut t = filled(&sizes, &theta);
        let before = t.clone();
        soft_reset(&mut t, &filled(&sizes, &prev), &picked, 0.5).unwrap();
        prop_assert_eq!(t, before);
    }

    #[test]
    fn blend_endpoints_and_untouched_bits((sizes, scores, theta, prev) in arb_case(), q in 0.0f64..=1.0, alpha in 0.0f64..=1.0) {
        let p = layout(&sizes);
        let iv = ImportanceVector { scores, metric: ImportanceMetric::Moment };
        let picked = find_dormant_params(&iv, &cfg(q, RankingScope::Global), p.segments(), None).unwrap();
        let t0 = filled(&sizes, &theta);
        let tp = filled(&sizes, &prev);

        let mut keep = t0.clone();
        soft_reset(&mut keep, &tp, &picked, 1.0).unwrap();
        prop_assert_eq!(&keep, &t0);

        let mut back = t0.clone();
        soft_reset(&mut back, &tp, &picked, 0.0).unwrap();
        for i in 0..t0.len() {
            let want = if picked.contains(&i) { prev[i] } else { theta[i] };
            prop_assert_eq!(back.values()[i].to_bits(), want.to_bits());
        }

        let mut mid = t0.clone();
        soft_reset(&mut mid, &tp, &picked, alpha).unwrap();
        for i in 0..t0.len() {
            if picked.contains(&i) {
                let want = alpha * theta[i] + (1.0 - alpha) * prev[i];
                prop_assert!((mid.values()[i] - want).abs() <= 1e-12);
            } else {
                prop_assert_eq!(mid.values()[i].to_bits(), theta[i].to_bits());
            }
        }
    }
}

fn net() -> (NetworkSpec, ParameterSet<f64>, ParameterSet<f64>) {
    let spec = NetworkSpec::new(4, vec![6, 5], 3, 8);
    let theta = init_params::<f64>(&spec).unwrap();
    let prev = NetworkSpec { init_seed: 9, ..spec.clone() };
    let prev = init_params::<f64>(&prev).unwrap();
    (spec, theta, prev)
}

#[test]
fn revert_and_reinit_only_write_the_reset_set() {
    let (spec, theta, prev) = net();
    let picked: Vec<usize> = (0..theta.len()).step_by(3).collect();
    for strategy in [ResetStrategy::Revert, ResetStrategy::RandomReinit] {
        let cfg = ResetConfig { strategy, ..ResetConfig::default() };
        let mut t = theta.clone();
        let n = alt_reset(&mut t, &prev, &picked, &cfg, &spec, None, &mut rng::stream(1, 0, "r")).unwrap();
        assert_eq!(n, picked.len());
        for i in 0..t.len() {
            if !picked.contains(&i) {
                assert_eq!(t.values()[i].to_bits(), theta.values()[i].to_bits());
            } else if strategy == ResetStrategy::Revert {
                assert_eq!(t.values()[i], prev.values()[i]);
            }
        }
    }
}

#[test]
fn shrink_perturb_touches_every_coordinate_with_small_noise() {
    let (spec, theta, prev) = net();
    let cfg = ResetConfig {
        strategy: ResetStrategy::ShrinkPerturb,
        sp_shrink: 0.5,
        sp_noise_scale: 0.0,
        ..ResetConfig::default()
    };
    let mut t = theta.clone();
    alt_reset(&mut t, &prev, &[], &cfg, &spec, None, &mut rng::stream(1, 0, "r")).unwrap();
    for (a, b) in t.values().iter().zip(theta.values()) {
        assert_eq!(*a, 0.5 * b);
    }
    let noisy = ResetConfig { sp_noise_scale: 0.01, ..cfg };
    let mut t = theta.clone();
    alt_reset(&mut t, &prev, &[], &noisy, &spec, None, &mut rng::stream(1, 0, "r")).unwrap();
    let max_dev = t
        .values()
        .iter()
        .zip(theta.values())
        .map(|(a, b)| (a - 0.5 * b).abs())
        .fold(0.0, f64::max);
    // 0.01 * sqrt(2 / 4) * a generous 6 sigma.
    assert!(max_dev > 0.0 && max_dev < 6.0 * 0.01 * (0.5f64).sqrt(), "{max_dev}");
}

#[test]
fn continual_backprop_picks_the_dead_unit() {
    let spec = NetworkSpec::new(3, vec![5], 2, 4);
    let mut theta = init_params::<f64>(&spec).unwrap();
    // Unit 2 has zero incoming weights and a negative bias: never active.
    let w = theta.segment_values_mut(NetworkSpec::weight_segment(0));
    w[6..9].fill(0.0);
    theta.segment_values_mut(NetworkSpec::bias_segment(0))[2] = -1.0;
    let probe = Batch::new(
        Tensor::new(vec![4, 3], vec![0.5, -1.0, 2.0, 1.0, 1.0, 1.0, -0.3, 0.2, 0.9, 2.0, 0.0, -1.0]).unwrap(),
        vec![0, 1, 0, 1],
        vec![0; 4],
    )
    .unwrap();
    let cfg = ResetConfig {
        strategy: ResetStrategy::ContinualBackprop,
        cbp_reset_fraction: 0.2,
        ..ResetConfig::default()
    };
    let prev = theta.clone();
    let n = alt_reset(&mut theta, &prev, &[], &cfg, &spec, Some(&probe), &mut rng::stream(0, 0, "cbp")).unwrap();
    assert_eq!(n, 3 + 1 + 2);
    assert_eq!(theta.segment_values(&theta.segments()[1])[2], 0.0);
    let out = theta.segment_values(&theta.segments()[2]);
    assert_eq!((out[2], out[5 + 2]), (0.0, 0.0));
    assert!(theta.segment_values(&theta.segments()[0])[6..9].iter().any(|&x| x != 0.0));
}
