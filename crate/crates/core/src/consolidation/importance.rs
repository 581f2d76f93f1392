//! Per-coordinate importance scores used to rank parameters before a reset.

use rand::Rng as _;

use super::config::ImportanceMetric;
use crate::error::{Error, Result};
use crate::nn::{loss_and_grad, Batch, ClassMask, NetworkSpec, ParameterSet};
use crate::optim::MomentState;
use crate::rng::{self, Rng};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceVector<T> {
    pub scores: Vec<T>,
    pub metric: ImportanceMetric,
}

fn moments_for<T: Scalar>(moments: &MomentState<T>, raw: bool) -> Result<(Vec<T>, Vec<T>)> {
    if raw {
        if moments.step_count == 0 {
            return Err(Error::Domain("moment score of a fresh moment state".into()));
        }
        Ok((moments.m.values().to_vec(), moments.v.values().to_vec()))
    } else {
        moments.bias_corrected()
    }
}

/// `S = |m_hat| * v_hat`.
pub fn score_moment<T: Scalar>(moments: &MomentState<T>) -> Result<ImportanceVector<T>> {
    score_moment_with(moments, false)
}

/// Moment score from raw or bias-corrected moments.
pub fn score_moment_with<T: Scalar>(moments: &MomentState<T>, raw: bool) -> Result<ImportanceVector<T>> {
    let (m, v) = moments_for(moments, raw)?;
    Ok(ImportanceVector {
        scores: m.iter().zip(&v).map(|(&m, &v)| m.abs() * v).collect(),
        metric: ImportanceMetric::Moment,
    })
}

pub fn score_first_moment<T: Scalar>(moments: &MomentState<T>, raw: bool) -> Result<ImportanceVector<T>> {
    let (m, _) = moments_for(moments, raw)?;
    Ok(ImportanceVector {
        scores: m.into_iter().map(|x| x.abs()).collect(),
        metric: ImportanceMetric::FirstMomentOnly,
    })
}

pub fn score_second_moment<T: Scalar>(moments: &MomentState<T>, raw: bool) -> Result<ImportanceVector<T>> {
    let (_, v) = moments_for(moments, raw)?;
    Ok(ImportanceVector {
        scores: v,
        metric: ImportanceMetric::SecondMomentOnly,
    })
}

/// `|theta - theta_prev|`.
pub fn score_param_drift<T: Scalar>(theta: &ParameterSet<T>, theta_prev: &ParameterSet<T>) -> Result<ImportanceVector<T>> {
    theta.check_layout(theta_prev)?;
    Ok(ImportanceVector {
        scores: theta
            .values()
            .iter()
            .zip(theta_prev.values())
            .map(|(&a, &b)| (a - b).abs())
            .collect(),
        metric: ImportanceMetric::ParamDrift,
    })
}

/// Empirical Fisher diagonal: mean over samples of the squared per-sample
/// gradient of `log p(y | x)`.
pub fn score_fisher<T: Scalar>(
    params: &ParameterSet<T>,
    spec: &NetworkSpec,
    samples: &Batch<T>,
    mask: &ClassMask,
) -> Result<ImportanceVector<T>> {
    if samples.is_empty() {
        return Err(Error::Domain("Fisher score needs at least one sample".into()));
    }
    let mut acc = vec![T::zero(); params.len()];
    for i in 0..samples.len() {
        // The per-sample cross-entropy gradient is minus the log-likelihood
        // gradient; squaring removes the sign.
        let (_, g) = loss_and_grad(params, spec, &samples.sample(i), mask)?;
        for (a, &gv) in acc.iter_mut().zip(g.values()) {
            *a += gv * gv;
        }
    }
    let inv = T::one() / T::from_usize_lossy(samples.len());
    acc.iter_mut().for_each(|a| *a *= inv);
    Ok(ImportanceVector {
        scores: acc,
        metric: ImportanceMetric::Fisher,
    })
}

/// Hutchinson estimate of the Hessian diagonal, `(1/K) sum_k v_k ⊙ H v_k`
/// with Rademacher probes.
///
/// Hessian-vector products are central differences of `grad`:
/// `Hv ≈ (g(θ + εv) - g(θ - εv)) / 2ε` with `ε = 1e-4 (1 + ‖θ‖∞)`.
/// Returns the signed estimate.
pub fn hutchinson_diagonal<T, G>(theta: &[T], mut grad: G, probes: usize, rng: &mut Rng) -> Result<Vec<T>>
where
    T: Scalar,
    G: FnMut(&[T]) -> Result<Vec<T>>,
{
    if probes == 0 {
        return Err(Error::Domain("Hutchinson estimate needs at least one probe".into()));
    }
    let n = theta.len();
    let sup = theta.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    let eps = T::lit(1e-4) * (T::one() + sup);
    let two_eps = eps + eps;
    let mut acc = vec![T::zero(); n];
    let mut plus = vec![T::zero(); n];
    let mut minus = vec![T::zero(); n];
    for _ in 0..probes {
        let v: Vec<T> = (0..n)
            .map(|_| if rng.random::<bool>() { T::one() } else { -T::one() })
            .collect();
        for i in 0..n {
            plus[i] = theta[i] + eps * v[i];
            minus[i] = theta[i] - eps * v[i];
        }
        let gp = grad(&plus)?;
        let gm = grad(&minus)?;
        if gp.len() != n || gm.len() != n {
            return Err(Error::Shape("gradient length differs from parameter length".into()));
        }
        for i in 0..n {
            acc[i] += v[i] * (gp[i] - gm[i]) / two_eps;
        }
    }
    let inv = T::one() / T::from_usize_lossy(probes);
    acc.iter_mut().for_each(|a| *a *= inv);
    Ok(acc)
}

/// Absolute Hutchinson curvature of the batch loss.
pub fn score_hessian_hutchinson<T: Scalar>(
    params: &ParameterSet<T>,
    spec: &NetworkSpec,
    batch: &Batch<T>,
    mask: &ClassMask,
    probes: usize,
    probe_seed: u64,
) -> Result<ImportanceVector<T>> {
    let mut r = rng::stream(probe_seed, 0, "hutchinson-probes");
    let mut scratch = params.clone();
    let diag = hutchinson_diagonal(
        params.values(),
        |theta| {
            scratch.values_mut().copy_from_slice(theta);
            Ok(loss_and_grad(&scratch, spec, batch, mask)?.1.into_values())
        },
        probes,
        &mut r,
    )?;
    Ok(ImportanceVector {
        scores: diag.into_iter().map(|h| h.abs()).collect(),
        metric: ImportanceMetric::HessianHutchinson,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(grads: &[&[f64]]) -> MomentState<f64> {
        let mut p = ParameterSet::zeros([("w", vec![grads[0].len()])]);
        let mut st = MomentState::new(&p, 0.9, 0.999);
        for g in grads {
            p.values_mut().copy_from_slice(g);
            st.update(&p).unwrap();
        }
        st
    }

    #[test]
    fn moment_score_is_product() {
        let mut st = state(&[&[1.0]]);
        // Overwrite with known bias-corrected values at step 1.
        st.m.values_mut()[0] = 0.5 * 0.1;
        st.v.values_mut()[0] = 0.2 * 0.001;
        let s = score_moment(&st).unwrap();
        assert!((s.scores[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn zero_first_moment_gives_zero_score() {
        let st = state(&[&[0.0, 0.0]]);
        assert_eq!(score_moment(&st).unwrap().scores, vec![0.0, 0.0]);
    }

    #[test]
    fn fresh_state_is_rejected() {
        let p = ParameterSet::<f64>::zeros([("w", vec![2])]);
        let st = MomentState::new(&p, 0.9, 0.999);
        assert!(matches!(score_moment(&st), Err(Error::Domain(_))));
        assert!(score_first_moment(&st, false).is_err());
        assert!(score_second_moment(&st, true).is_err());
    }

    #[test]
    fn consistent_gradient_outranks_noisy_one() {
        let seq: Vec<Vec<f64>> = (0..40).map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 }, 1.0]).collect();
        let refs: Vec<&[f64]> = seq.iter().map(Vec::as_slice).collect();
        let s = score_moment(&state(&refs)).unwrap();
        assert!(s.scores[1] > s.scores[0]);
    }

    #[test]
    fn single_moment_scores() {
        let mut st = state(&[&[1.0]]);
        st.m.values_mut()[0] = -0.3 * 0.1;
        st.v.values_mut()[0] = 0.04 * 0.001;
        assert!((score_first_moment(&st, false).unwrap().scores[0] - 0.3).abs() < 1e-12);
        assert!((score_second_moment(&st, false).unwrap().scores[0] - 0.04).abs() < 1e-12);
    }

    #[test]
    fn drift_scores() {
        let mut a = ParameterSet::<f64>::zeros([("w", vec![2])]);
        let mut b = a.clone();
        assert_eq!(score_param_drift(&a, &b).unwrap().scores, vec![0.0, 0.0]);
        a.values_mut().copy_from_slice(&[2.0, 1.0]);
        b.values_mut().copy_from_slice(&[4.0, 1.0]);
        assert_eq!(score_param_drift(&a, &b).unwrap().scores, vec![2.0, 0.0]);
    }

    #[test]
    fn hutchinson_exact_on_diagonal_quadratic() {
        let a: [f64; 5] = [3.0, 0.5, 7.0, 0.0, 1.25];
        let theta: [f64; 5] = [0.3, -1.0, 2.0, 4.0, -0.7];
        for probes in [1, 2, 9] {
            let mut r = rng::stream(5, 0, "t");
            let h = hutchinson_diagonal(
                &theta,
                |x| Ok(x.iter().zip(&a).map(|(x, a)| a * x).collect()),
                probes,
                &mut r,
            )
            .unwrap();
            for (h, a) in h.iter().zip(&a) {
                assert!((h - a).abs() < 1e-9, "{h} vs {a}");
            }
        }
    }
}
