//! Dense ReLU multi-layer perceptron with a softmax cross-entropy head.
//!
//! Layer `l` owns two segments, `layer{l}.weight` with shape `[out, in]` and
//! `layer{l}.bias` with shape `[out]`, stored in that order. The output layer is
//! sized for every class of the stream; classes that have not been seen yet are
//! excluded through a [`ClassMask`], which behaves like a `-inf` logit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use super::params::ParameterSet;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitScheme {
    /// Uniform on `±sqrt(6 / fan_in)`, biases zero.
    #[default]
    KaimingUniform,
}

/// Kaiming-uniform bound for a layer with the given fan-in.
pub fn kaiming_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

/// Standard deviation of the Kaiming-uniform draw, `bound / sqrt(3)`.
pub fn kaiming_std(fan_in: usize) -> f64 {
    (2.0 / fan_in as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
    pub activation: Activation,
    pub init_scheme: InitScheme,
    pub init_seed: u64,
}

impl NetworkSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, num_classes: usize, init_seed: u64) -> Self {
        Self {
            input_dim,
            hidden_dims,
            num_classes,
            activation: Activation::Relu,
            init_scheme: InitScheme::KaimingUniform,
            init_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim < 1 {
            return Err(Error::Config("input_dim must be >= 1".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be >= 2".into()));
        }
        if let Some(i) = self.hidden_dims.iter().position(|&h| h == 0) {
            return Err(Error::Config(format!("hidden_dims[{i}] must be >= 1")));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` per layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut prev = self.input_dim;
        for &h in self.hidden_dims.iter().chain(std::iter::once(&self.num_classes)) {
            dims.push((prev, h));
            prev = h;
        }
        dims
    }

    pub fn num_layers(&self) -> usize {
        self.hidden_dims.len() + 1
    }

    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        self.layer_dims()
            .into_iter()
            .enumerate()
            .flat_map(|(l, (fan_in, fan_out))| {
                [
                    (format!("layer{l}.weight"), vec![fan_out, fan_in]),
                    (format!("layer{l}.bias"), vec![fan_out]),
                ]
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }

    /// Segment index of the weight of layer `l`; the bias follows it.
    pub fn weight_segment(l: usize) -> usize {
        2 * l
    }

    pub fn bias_segment(l: usize) -> usize {
        2 * l + 1
    }
}

/// Which output classes take part in the softmax and in prediction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMask(Vec<bool>);

impl ClassMask {
    pub fn all(num_classes: usize) -> Self {
        Self(vec![true; num_classes])
    }

    pub fn from_classes(num_classes: usize, classes: impl IntoIterator<Item = usize>) -> Self {
        let mut m = vec![false; num_classes];
        for c in classes {
            m[c] = true;
        }
        Self(m)
    }

    pub fn contains(&self, c: usize) -> bool {
        self.0.get(c).copied().unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn active_count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }
}

/// Labeled minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    pub inputs: Tensor<T>,
    pub labels: Vec<usize>,
    pub task_ids: Vec<usize>,
}

impl<T: Scalar> Batch<T> {
    pub fn new(inputs: Tensor<T>, labels: Vec<usize>, task_ids: Vec<usize>) -> Result<Self> {
        if inputs.shape().len() != 2 {
            return Err(Error::Shape(format!(
                "batch inputs must be a matrix, got shape {:?}",
                inputs.shape()
            )));
        }
        if labels.len() != inputs.rows() || task_ids.len() != inputs.rows() {
            return Err(Error::Shape(format!(
                "{} rows but {} labels and {} task ids",
                inputs.rows(),
                labels.len(),
                task_ids.len()
            )));
        }
        Ok(Self {
            inputs,
            labels,
            task_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Single-example batch `i`, used for per-sample gradients.
    pub fn sample(&self, i: usize) -> Self {
        Self {
            inputs: Tensor::new(vec![1, self.inputs.cols()], self.inputs.row(i).to_vec())
                .expect("row has matrix width"),
            labels: vec![self.labels[i]],
            task_ids: vec![self.task_ids[i]],
        }
    }
}

pub fn init_params<T: Scalar>(spec: &NetworkSpec) -> Result<ParameterSet<T>> {
    spec.validate()?;
    let mut params = ParameterSet::zeros(spec.layout());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.init_seed);
    for (l, (fan_in, _)) in spec.layer_dims().into_iter().enumerate() {
        let b = kaiming_bound(fan_in);
        let dist = Uniform::new_inclusive(-b, b).expect("finite bound");
        for w in params.segment_values_mut(NetworkSpec::weight_segment(l)) {
            *w = T::lit(dist.sample(&mut rng));
        }
    }
    Ok(params)
}

fn check_params<T: Scalar>(params: &ParameterSet<T>, spec: &NetworkSpec) -> Result<()> {
    let layout = spec.layout();
    let ok = params.segments().len() == layout.len()
        && params
            .segments()
            .iter()
            .zip(&layout)
            .all(|(s, (n, shape))| &s.name == n && &s.shape == shape);
    if ok {
        Ok(())
    } else {
        Err(Error::Shape("parameter layout does not match network spec".into()))
    }
}

fn check_inputs<T: Scalar>(inputs: &Tensor<T>, spec: &NetworkSpec) -> Result<()> {
    if inputs.shape().len() != 2 || inputs.cols() != spec.input_dim {
        return Err(Error::Shape(format!(
            "inputs of shape {:?}, expected [B, {}]",
            inputs.shape(),
            spec.input_dim
        )));
    }
    Ok(())
}

/// `out[b, o] = bias[o] + sum_i w[o, i] * x[b, i]` over a `[rows, fan_in]` input.
fn affine<T: Scalar>(x: &[T], rows: usize, w: &[T], bias: &[T], fan_in: usize, fan_out: usize) -> Vec<T> {
    // Transposed copy so the inner loop runs over contiguous outputs.
    let mut wt = vec![T::zero(); fan_in * fan_out];
    for o in 0..fan_out {
        for i in 0..fan_in {
            wt[i * fan_out + o] = w[o * fan_in + i];
        }
    }
    let mut out = Vec::with_capacity(rows * fan_out);
    for r in 0..rows {
        out.extend_from_slice(bias);
        let acc = &mut out[r * fan_out..(r + 1) * fan_out];
        let xr = &x[r * fan_in..(r + 1) * fan_in];
        for (i, &xi) in xr.iter().enumerate() {
            if xi == T::zero() {
                continue;
            }
            let wrow = &wt[i * fan_out..(i + 1) * fan_out];
            for (a, &wv) in acc.iter_mut().zip(wrow) {
                *a += xi * wv;
            }
        }
    }
    out
}

/// Post-activation outputs of every layer; the last entry holds the logits.
fn forward_trace<T: Scalar>(params: &ParameterSet<T>, spec: &NetworkSpec, inputs: &Tensor<T>) -> Vec<Vec<T>> {
    let rows = inputs.rows();
    let segs = params.segments();
    let dims = spec.layer_dims();
    let last = dims.len() - 1;
    let mut acts: Vec<Vec<T>> = Vec::with_capacity(dims.len());
    for (l, &(fan_in, fan_out)) in dims.iter().enumerate() {
        let x = if l == 0 { inputs.data() } else { &acts[l - 1] };
        let w = params.segment_values(&segs[NetworkSpec::weight_segment(l)]);
        let b = params.segment_values(&segs[NetworkSpec::bias_segment(l)]);
        let mut z = affine(x, rows, w, b, fan_in, fan_out);
        if l != last {
            for v in z.iter_mut() {
                if *v < T::zero() {
                    *v = T::zero();
                }
            }
        }
        acts.push(z);
    }
    acts
}

/// Logits `[B, num_classes]`.
pub fn forward<T: Scalar>(params: &ParameterSet<T>, spec: &NetworkSpec, inputs: &Tensor<T>) -> Result<Tensor<T>> {
    check_params(params, spec)?;
    check_inputs(inputs, spec)?;
    let logits = forward_trace(params, spec, inputs).pop().expect("at least one layer");
    Tensor::new(vec![inputs.rows(), spec.num_classes], logits)
}

/// Post-ReLU activations of each hidden layer, `[B, width]` each.
pub fn hidden_activations<T: Scalar>(
    params: &ParameterSet<T>,
    spec: &NetworkSpec,
    inputs: &Tensor<T>,
) -> Result<Vec<Tensor<T>>> {
    check_params(params, spec)?;
    check_inputs(inputs, spec)?;
    let mut acts = forward_trace(params, spec, inputs);
    acts.pop();
    acts.into_iter()
        .zip(&spec.hidden_dims)
        .map(|(a, &w)| Tensor::new(vec![inputs.rows(), w], a))
        .collect()
}

/// Softmax of one logit row restricted to the active classes; inactive classes get 0.
pub fn masked_softmax<T: Scalar>(logits: &[T], mask: &ClassMask) -> Vec<T> {
    let max = logits
        .iter()
        .enumerate()
        .filter(|(c, _)| mask.contains(*c))
        .fold(T::neg_infinity(), |m, (_, &z)| m.max(z));
    let mut p: Vec<T> = logits
        .iter()
        .enumerate()
        .map(|(c, &z)| if mask.contains(c) { (z - max).exp() } else { T::zero() })
        .collect();
    let total: T = p.iter().copied().sum();
    for v in p.iter_mut() {
        *v /= total;
    }
    p
}

fn check_labels<T: Scalar>(batch: &Batch<T>, spec: &NetworkSpec, mask: &ClassMask) -> Result<()> {
    if mask.len() != spec.num_classes {
        return Err(Error::Shape(format!(
            "class mask covers {} classes, network has {}",
            mask.len(),
            spec.num_classes
        )));
    }
    if let Some(&y) = batch.labels.iter().find(|&&y| !mask.contains(y)) {
        return Err(Error::Domain(format!("label {y} is outside the active classes")));
    }
    Ok(())
}

/// Mean softmax cross-entropy over the batch and its exact gradient.
pub fn loss_and_grad<T: Scalar>(
    params: &ParameterSet<T>,
    spec: &NetworkSpec,
    batch: &Batch<T>,
    mask: &ClassMask,
) -> Result<(T, ParameterSet<T>)> {
    check_params(params, spec)?;
    check_inputs(&batch.inputs, spec)?;
    if batch.is_empty() {
        return Err(Error::Domain("empty batch".into()));
    }
    check_labels(batch, spec, mask)?;

    let rows = batch.len();
    let inv_rows = T::one() / T::from_usize_lossy(rows);
    let classes = spec.num_classes;
    let acts = forward_trace(params, spec, &batch.inputs);
    let logits = acts.last().expect("at least one layer");

    let mut loss = T::zero();
    let mut delta = vec![T::zero(); rows * classes];
    for r in 0..rows {
        let row = &logits[r * classes..(r + 1) * classes];
        let p = masked_softmax(row, mask);
        let y = batch.labels[r];
        loss -= p[y].ln();
        let d = &mut delta[r * classes..(r + 1) * classes];
        for c in 0..classes {
            d[c] = p[c] * inv_rows;
        }
        d[y] -= inv_rows;
    }
    loss *= inv_rows;
    if !loss.is_finite() {
        return Err(Error::Domain("non-finite loss".into()));
    }

    let mut grads = params.zeros_like();
    let dims = spec.layer_dims();
    for l in (0..dims.len()).rev() {
        let (fan_in, fan_out) = dims[l];
        let x: &[T] = if l == 0 { batch.inputs.data() } else { &acts[l - 1] };
        {
            let gw_seg = grads.segments()[NetworkSpec::weight_segment(l)].range();
            let gb_seg = grads.segments()[NetworkSpec::bias_segment(l)].range();
            let g = grads.values_mut();
            for r in 0..rows {
                let xr = &x[r * fan_in..(r + 1) * fan_in];
                let dr = &delta[r * fan_out..(r + 1) * fan_out];
                for (o, &d) in dr.iter().enumerate() {
                    if d == T::zero() {
                        continue;
                    }
                    g[gb_seg.start + o] += d;
                    let gw = &mut g[gw_seg.start + o * fan_in..gw_seg.start + (o + 1) * fan_in];
                    for (gv, &xv) in gw.iter_mut().zip(xr) {
                        *gv += d * xv;
                    }
                }
            }
        }
        if l > 0 {
            let w = params.segment_values(&params.segments()[NetworkSpec::weight_segment(l)]);
            let mut prev = vec![T::zero(); rows * fan_in];
            for r in 0..rows {
                let dr = &delta[r * fan_out..(r + 1) * fan_out];
                let pr = &mut prev[r * fan_in..(r + 1) * fan_in];
                for (o, &d) in dr.iter().enumerate() {
                    if d == T::zero() {
                        continue;
                    }
                    for (pv, &wv) in pr.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in]) {
                        *pv += d * wv;
                    }
                }
                let xr = &x[r * fan_in..(r + 1) * fan_in];
                for (pv, &a) in pr.iter_mut().zip(xr) {
                    if a <= T::zero() {
                        *pv = T::zero();
                    }
                }
            }
            delta = prev;
        }
    }
    Ok((loss, grads))
}

/// Argmax over active classes; ties go to the lowest class index.
pub fn argmax_masked<T: Scalar>(row: &[T], mask: &ClassMask) -> usize {
    let mut best: Option<(usize, T)> = None;
    for (c, &z) in row.iter().enumerate() {
        if !mask.contains(c) {
            continue;
        }
        match best {
            Some((_, bz)) if z <= bz => {}
            _ => best = Some((c, z)),
        }
    }
    best.map(|(c, _)| c).unwrap_or(0)
}

pub fn predict<T: Scalar>(
    params: &ParameterSet<T>,
    spec: &NetworkSpec,
    inputs: &Tensor<T>,
    mask: &ClassMask,
) -> Result<Vec<usize>> {
    let logits = forward(params, spec, inputs)?;
    Ok((0..logits.rows()).map(|r| argmax_masked(logits.row(r), mask)).collect())
}
