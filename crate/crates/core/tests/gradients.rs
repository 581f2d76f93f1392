mod common;

use common::{random_batch, random_spec, rng};
use rand::Rng;
use wsc_core::nn::{
    forward, init_params, loss_and_grad, predict, Batch, ClassMask, NetworkSpec, ParameterSet, Tensor,
};
use wsc_core::optim::{Optimizer, OptimizerConfig};

fn perturbed(p: &ParameterSet<f64>, i: usize, d: f64) -> ParameterSet<f64> {
    let mut q = p.clone();
    q.values_mut()[i] += d;
    q
}

/// Initialized weights plus random biases, so no pre-activation sits exactly
/// on the ReLU kink (zero biases put all-zero input rows right on it).
fn random_params(spec: &NetworkSpec, r: &mut rand_chacha::ChaCha8Rng) -> ParameterSet<f64> {
    let mut p = init_params::<f64>(spec).unwrap();
    for l in 0..spec.num_layers() {
        for b in p.segment_values_mut(NetworkSpec::bias_segment(l)) {
            *b = r.random_range(-0.5..0.5);
        }
    }
    p
}

fn max_rel_error(params: &ParameterSet<f64>, spec: &NetworkSpec, batch: &Batch<f64>, mask: &ClassMask) -> f64 {
    let (_, g) = loss_and_grad(params, spec, batch, mask).unwrap();
    let eps = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        let (lp, _) = loss_and_grad(&perturbed(params, i, eps), spec, batch, mask).unwrap();
        let (lm, _) = loss_and_grad(&perturbed(params, i, -eps), spec, batch, mask).unwrap();
        let fd = (lp - lm) / (2.0 * eps);
        let a = g.values()[i];
        let err = (a - fd).abs() / (a.abs() + fd.abs()).max(1e-6);
        worst = worst.max(err);
    }
    worst
}

#[test]
fn two_sixteen_three_net_matches_finite_differences() {
    let mut r = rng(11);
    let spec = NetworkSpec::new(2, vec![16], 3, 4);
    let params = random_params(&spec, &mut r);
    let batch = random_batch(&mut r, 8, 2, 3);
    let err = max_rel_error(&params, &spec, &batch, &ClassMask::all(3));
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn twenty_random_nets_match_finite_differences() {
    let mut r = rng(2024);
    for _ in 0..20 {
        let spec = random_spec(&mut r);
        let params = random_params(&spec, &mut r);
        let batch = random_batch(&mut r, 6, spec.input_dim, spec.num_classes);
        let err = max_rel_error(&params, &spec, &batch, &ClassMask::all(spec.num_classes));
        assert!(err < 1e-4, "{spec:?}: max relative error {err}");
    }
}

#[test]
fn masked_head_matches_finite_differences() {
    let mut r = rng(5);
    let spec = NetworkSpec::new(3, vec![7, 5], 6, 9);
    let params = random_params(&spec, &mut r);
    let mask = ClassMask::from_classes(6, [0, 2, 3]);
    let mut batch = random_batch(&mut r, 10, 3, 3);
    let labels: Vec<usize> = batch.labels.iter().map(|&l| [0, 2, 3][l]).collect();
    batch.labels = labels;
    let err = max_rel_error(&params, &spec, &batch, &mask);
    assert!(err < 1e-4, "max relative error {err}");
}

/// Straight-line forward pass written without the engine's helpers.
fn naive_forward(params: &ParameterSet<f64>, spec: &NetworkSpec, x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    let dims = spec.layer_dims();
    for (l, &(fan_in, fan_out)) in dims.iter().enumerate() {
        let w = params.segment_values(params.segment(&format!("layer{l}.weight")).unwrap());
        let b = params.segment_values(params.segment(&format!("layer{l}.bias")).unwrap());
        let mut next = vec![0.0; fan_out];
        for o in 0..fan_out {
            let mut s = b[o];
            for i in 0..fan_in {
                s += w[o * fan_in + i] * h[i];
            }
            next[o] = if l + 1 < dims.len() { s.max(0.0) } else { s };
        }
        h = next;
    }
    h
}

#[test]
fn forward_matches_straight_line_arithmetic() {
    let mut r = rng(77);
    let spec = NetworkSpec::new(5, vec![8, 6], 4, 31);
    let params = init_params::<f64>(&spec).unwrap();
    let batch = random_batch(&mut r, 7, 5, 4);
    let logits = forward(&params, &spec, &batch.inputs).unwrap();
    for row in 0..7 {
        let want = naive_forward(&params, &spec, batch.inputs.row(row));
        for (a, b) in logits.row(row).iter().zip(&want) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }
}

#[test]
fn two_gaussians_are_learned() {
    let mut r = rng(3);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..400 {
        let c = i % 2;
        let centre = if c == 0 { -2.0 } else { 2.0 };
        rows.push(vec![centre + r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]);
        labels.push(c);
    }
    let inputs = Tensor::from_rows(&rows, 2).unwrap();
    let spec = NetworkSpec::new(2, vec![8], 2, 1);
    let mut params = init_params::<f64>(&spec).unwrap();
    let mask = ClassMask::all(2);
    let mut opt = Optimizer::new(OptimizerConfig::sgd(0.1, 0.0), &params).unwrap();
    for step in 0..200 {
        let idx: Vec<usize> = (0..32).map(|k| (step * 32 + k) % 400).collect();
        let sub: Vec<&[f64]> = idx.iter().map(|&i| rows[i].as_slice()).collect();
        let batch = Batch::new(
            Tensor::from_rows(&sub, 2).unwrap(),
            idx.iter().map(|&i| labels[i]).collect(),
            vec![0; 32],
        )
        .unwrap();
        let (_, g) = loss_and_grad(&params, &spec, &batch, &mask).unwrap();
        opt.step(&mut params, &g).unwrap();
    }
    let pred = predict(&params, &spec, &inputs, &mask).unwrap();
    let acc = pred.iter().zip(&labels).filter(|(p, l)| p == l).count() as f64 / 400.0;
    assert!(acc > 0.95, "accuracy {acc}");
}
