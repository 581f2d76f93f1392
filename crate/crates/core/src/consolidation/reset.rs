//! Dormant-coordinate selection and the reset rules applied to it.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use rand_distr::{Distribution, StandardNormal, Uniform};

use super::config::{RankingScope, ResetConfig, ResetStrategy};
use super::importance::ImportanceVector;
use crate::error::{Error, Result};
use crate::nn::{hidden_activations, kaiming_bound, kaiming_std, Batch, NetworkSpec, ParameterSet, Segment};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Number of coordinates reset out of `eligible` when a fraction `q` is kept.
pub fn reset_count(retain_fraction: f64, eligible: usize) -> usize {
    // The small offset absorbs products like 0.8 * 5 = 3.9999999999999996.
    let k = ((1.0 - retain_fraction) * eligible as f64 + 1e-9).floor();
    (k.max(0.0) as usize).min(eligible)
}

/// Coordinates that may be scored and reset.
///
/// Output-layer rows (weights and bias) of classes outside `seen_before`
/// are excluded: they have no meaningful previous-task value.
pub fn eligible_coordinates<T: Scalar>(
    spec: &NetworkSpec,
    params: &ParameterSet<T>,
    seen_before: &BTreeSet<usize>,
) -> Vec<bool> {
    let mut eligible = vec![true; params.len()];
    let head = spec.num_layers() - 1;
    let w = &params.segments()[NetworkSpec::weight_segment(head)];
    let b = &params.segments()[NetworkSpec::bias_segment(head)];
    let fan_in = w.shape[1];
    for c in 0..spec.num_classes {
        if seen_before.contains(&c) {
            continue;
        }
        let row = w.offset + c * fan_in;
        eligible[row..row + fan_in].iter_mut().for_each(|e| *e = false);
        eligible[b.offset + c] = false;
    }
    eligible
}

fn cmp_scores<T: Scalar>(a: T, b: T) -> Ordering {
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}

fn lowest<T: Scalar>(scores: &[T], mut idx: Vec<usize>, k: usize) -> Vec<usize> {
    idx.sort_by(|&a, &b| cmp_scores(scores[a], scores[b]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// The `(1 - q)` fraction of eligible coordinates with the lowest scores,
/// returned in ascending index order. Ties go to the lower flat index.
///
/// With `per_layer` scope the total `floor((1 - q) * eligible)` is split over
/// segments by largest remainder, so both scopes reset the same number of
/// coordinates.
pub fn find_dormant_params<T: Scalar>(
    scores: &ImportanceVector<T>,
    cfg: &ResetConfig,
    segments: &[Segment],
    eligible: Option<&[bool]>,
) -> Result<Vec<usize>> {
    let n = scores.scores.len();
    if segments.iter().map(Segment::len).sum::<usize>() != n {
        return Err(Error::Shape("scores do not match the parameter layout".into()));
    }
    if eligible.is_some_and(|e| e.len() != n) {
        return Err(Error::Shape("eligibility mask does not match the parameter layout".into()));
    }
    if !(0.0..=1.0).contains(&cfg.retain_fraction) {
        return Err(Error::Config("reset.retain_fraction must be in [0, 1]".into()));
    }
    let is_eligible = |i: usize| eligible.is_none_or(|e| e[i]);
    let s = &scores.scores;
    let mut out = match cfg.ranking_scope {
        RankingScope::Global => {
            let idx: Vec<usize> = (0..n).filter(|&i| is_eligible(i)).collect();
            let k = reset_count(cfg.retain_fraction, idx.len());
            lowest(s, idx, k)
        }
        RankingScope::PerLayer => {
            let per_seg: Vec<Vec<usize>> = segments
                .iter()
                .map(|seg| seg.range().filter(|&i| is_eligible(i)).collect())
                .collect();
            let total: usize = per_seg.iter().map(Vec::len).sum();
            let k = reset_count(cfg.retain_fraction, total);
            let exact: Vec<f64> = per_seg
                .iter()
                .map(|v| (1.0 - cfg.retain_fraction) * v.len() as f64)
                .collect();
            let mut quota: Vec<usize> = per_seg
                .iter()
                .map(|v| reset_count(cfg.retain_fraction, v.len()))
                .collect();
            let mut order: Vec<usize> = (0..segments.len()).collect();
            order.sort_by(|&a, &b| {
                let ra = exact[a] - quota[a] as f64;
                let rb = exact[b] - quota[b] as f64;
                rb.total_cmp(&ra).then(a.cmp(&b))
            });
            let mut assigned: usize = quota.iter().sum();
            while assigned > k {
                // Rounding slack pushed a floor over; take it back from the
                // smallest remainder.
                let &j = order.iter().rev().find(|&&j| quota[j] > 0).expect("positive quota");
                quota[j] -= 1;
                assigned -= 1;
            }
            for &j in order.iter().cycle().take(order.len() * 2) {
                if assigned == k {
                    break;
                }
                if quota[j] < per_seg[j].len() {
                    quota[j] += 1;
                    assigned += 1;
                }
            }
            per_seg
                .into_iter()
                .zip(quota)
                .flat_map(|(idx, q)| lowest(s, idx, q))
                .collect()
        }
    };
    out.sort_unstable();
    Ok(out)
}

/// `theta[l] = alpha * theta[l] + (1 - alpha) * theta_prev[l]` on `reset`.
pub fn soft_reset<T: Scalar>(
    theta: &mut ParameterSet<T>,
    theta_prev: &ParameterSet<T>,
    reset: &[usize],
    alpha: f64,
) -> Result<()> {
    theta.check_layout(theta_prev)?;
    let a = T::lit(alpha);
    let b = T::one() - a;
    let prev = theta_prev.values();
    let cur = theta.values_mut();
    for &l in reset {
        cur[l] = a * cur[l] + b * prev[l];
    }
    Ok(())
}

/// `(layer, is_weight)` for a segment index.
fn layer_of(segment: usize) -> (usize, bool) {
    (segment / 2, segment.is_multiple_of(2))
}

/// Kaiming-uniform value for coordinate `i`; zero for biases.
fn fresh_value<T: Scalar>(spec: &NetworkSpec, params: &ParameterSet<T>, i: usize, rng: &mut Rng) -> T {
    let seg = params.segment_of(i).expect("coordinate in range");
    let (layer, is_weight) = layer_of(seg);
    if !is_weight {
        return T::zero();
    }
    let b = kaiming_bound(spec.layer_dims()[layer].0);
    T::lit(Uniform::new_inclusive(-b, b).expect("finite bound").sample(rng))
}

/// Hidden-unit utility `mean_b |a_u| * sum_o |W_next[o, u]|` for every hidden
/// layer, in `(layer, unit)` order.
pub fn unit_utilities<T: Scalar>(
    theta: &ParameterSet<T>,
    spec: &NetworkSpec,
    probe: &Batch<T>,
) -> Result<Vec<Vec<T>>> {
    if probe.is_empty() {
        return Err(Error::Domain("unit utility needs a non-empty probe batch".into()));
    }
    let acts = hidden_activations(theta, spec, &probe.inputs)?;
    let inv = T::one() / T::from_usize_lossy(probe.len());
    let dims = spec.layer_dims();
    let mut out = Vec::with_capacity(acts.len());
    for (l, a) in acts.iter().enumerate() {
        let width = spec.hidden_dims[l];
        let (fan_in_next, fan_out_next) = dims[l + 1];
        debug_assert_eq!(fan_in_next, width);
        let w_next = theta.segment_values(&theta.segments()[NetworkSpec::weight_segment(l + 1)]);
        let mut util = vec![T::zero(); width];
        for r in 0..a.rows() {
            for (u, &v) in a.row(r).iter().enumerate() {
                util[u] += v.abs();
            }
        }
        for (u, val) in util.iter_mut().enumerate() {
            let out_l1: T = (0..fan_out_next).map(|o| w_next[o * width + u].abs()).sum();
            *val = *val * inv * out_l1;
        }
        out.push(util);
    }
    Ok(out)
}

/// Reinitializes the lowest-utility hidden units: fresh incoming weights,
/// zero bias and zero outgoing weights. Returns the reset `(layer, unit)` pairs.
pub fn continual_backprop_reset<T: Scalar>(
    theta: &mut ParameterSet<T>,
    spec: &NetworkSpec,
    probe: &Batch<T>,
    fraction: f64,
    rng: &mut Rng,
) -> Result<Vec<(usize, usize)>> {
    let util = unit_utilities(theta, spec, probe)?;
    let mut units: Vec<(usize, usize)> = util
        .iter()
        .enumerate()
        .flat_map(|(l, u)| (0..u.len()).map(move |k| (l, k)))
        .collect();
    let k = reset_count(1.0 - fraction, units.len());
    units.sort_by(|a, b| cmp_scores(util[a.0][a.1], util[b.0][b.1]).then(a.cmp(b)));
    units.truncate(k);
    units.sort_unstable();
    let dims = spec.layer_dims();
    for &(l, u) in &units {
        let (fan_in, _) = dims[l];
        let bound = kaiming_bound(fan_in);
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let w = theta.segment_values_mut(NetworkSpec::weight_segment(l));
        for x in &mut w[u * fan_in..(u + 1) * fan_in] {
            *x = T::lit(dist.sample(rng));
        }
        theta.segment_values_mut(NetworkSpec::bias_segment(l))[u] = T::zero();
        let width = spec.hidden_dims[l];
        let fan_out_next = dims[l + 1].1;
        let w_next = theta.segment_values_mut(NetworkSpec::weight_segment(l + 1));
        for o in 0..fan_out_next {
            w_next[o * width + u] = T::zero();
        }
    }
    Ok(units)
}

/// Reset rules other than the soft blend. Returns the number of coordinates written.
///
/// * `random_reinit`: fresh init draws on `reset`.
/// * `revert`: `theta_prev` values on `reset`.
/// * `shrink_perturb`: `lambda * theta + sigma * xi` on every coordinate, with
///   `sigma` relative to the layer's init standard deviation.
/// * `continual_backprop`: unit-level reset driven by `probe`; skipped when
///   `retain_fraction` is 1.
pub fn alt_reset<T: Scalar>(
    theta: &mut ParameterSet<T>,
    theta_prev: &ParameterSet<T>,
    reset: &[usize],
    cfg: &ResetConfig,
    spec: &NetworkSpec,
    probe: Option<&Batch<T>>,
    rng: &mut Rng,
) -> Result<usize> {
    theta.check_layout(theta_prev)?;
    match cfg.strategy {
        ResetStrategy::SoftBlend => Err(Error::Config(
            "soft_blend is not an alternative reset strategy; use soft_reset".into(),
        )),
        ResetStrategy::Revert => {
            let prev = theta_prev.values();
            let cur = theta.values_mut();
            for &l in reset {
                cur[l] = prev[l];
            }
            Ok(reset.len())
        }
        ResetStrategy::RandomReinit => {
            for &l in reset {
                let v = fresh_value(spec, theta, l, rng);
                theta.values_mut()[l] = v;
            }
            Ok(reset.len())
        }
        ResetStrategy::ShrinkPerturb => {
            let shrink = T::lit(cfg.sp_shrink);
            let dims = spec.layer_dims();
            for s in 0..theta.segments().len() {
                let (layer, _) = layer_of(s);
                let sigma = T::lit(cfg.sp_noise_scale * kaiming_std(dims[layer].0));
                for x in theta.segment_values_mut(s) {
                    let xi: f64 = StandardNormal.sample(rng);
                    *x = shrink * *x + sigma * T::lit(xi);
                }
            }
            Ok(theta.len())
        }
        ResetStrategy::ContinualBackprop if cfg.retain_fraction >= 1.0 => Ok(0),
        ResetStrategy::ContinualBackprop => {
            let probe = probe.ok_or_else(|| Error::Config("continual_backprop needs a probe batch".into()))?;
            let units = continual_backprop_reset(theta, spec, probe, cfg.cbp_reset_fraction, rng)?;
            let dims = spec.layer_dims();
            Ok(units
                .iter()
                .map(|&(l, _)| dims[l].0 + 1 + dims[l + 1].1)
                .sum())
        }
    }
}
