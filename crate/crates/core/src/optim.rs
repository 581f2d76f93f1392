//! SGD and Adam updates plus the shadow moment tracker used for importance
//! scoring.
//!
//! The shadow tracker keeps Adam's first/second gradient moments for every
//! parameter no matter which optimizer performs the update, so moment-based
//! scores are defined under plain SGD as well.

use crate::error::{Error, Result};
use crate::nn::ParameterSet;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub sgd_momentum: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            learning_rate: 0.05,
            sgd_momentum: 0.9,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64, momentum: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            learning_rate,
            sgd_momentum: momentum,
            ..Self::default()
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("optimizer.learning_rate must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.sgd_momentum) {
            return Err(Error::Config("optimizer.sgd_momentum must be in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) {
            return Err(Error::Config("optimizer.adam_beta1 must be in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::Config("optimizer.adam_beta2 must be in [0, 1)".into()));
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return Err(Error::Config("optimizer.adam_eps must be > 0".into()));
        }
        Ok(())
    }
}

/// Exponential moving averages of the gradient and squared gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentState<T> {
    pub m: ParameterSet<T>,
    pub v: ParameterSet<T>,
    pub step_count: u64,
    pub beta1: T,
    pub beta2: T,
}

impl<T: Scalar> MomentState<T> {
    pub fn new(layout: &ParameterSet<T>, beta1: T, beta2: T) -> Self {
        Self {
            m: layout.zeros_like(),
            v: layout.zeros_like(),
            step_count: 0,
            beta1,
            beta2,
        }
    }

    /// Zeroes both moments and the step counter.
    pub fn reset(&mut self) {
        self.m.values_mut().iter_mut().for_each(|x| *x = T::zero());
        self.v.values_mut().iter_mut().for_each(|x| *x = T::zero());
        self.step_count = 0;
    }

    /// One EMA step: `m <- b1 m + (1-b1) g`, `v <- b2 v + (1-b2) g^2`.
    pub fn update(&mut self, grads: &ParameterSet<T>) -> Result<()> {
        self.m.check_layout(grads)?;
        let (b1, b2) = (self.beta1, self.beta2);
        let (c1, c2) = (T::one() - b1, T::one() - b2);
        for ((m, v), &g) in self
            .m
            .values_mut()
            .iter_mut()
            .zip(self.v.values_mut().iter_mut())
            .zip(grads.values())
        {
            *m = b1 * *m + c1 * g;
            *v = b2 * *v + c2 * g * g;
        }
        self.step_count += 1;
        Ok(())
    }

    /// Bias-corrected `(m_hat, v_hat)`; the state is left untouched.
    pub fn bias_corrected(&self) -> Result<(Vec<T>, Vec<T>)> {
        if self.step_count == 0 {
            return Err(Error::Domain("bias correction needs at least one recorded step".into()));
        }
        let t = T::from_u64(self.step_count).expect("step count representable");
        let c1 = T::one() - self.beta1.powf(t);
        let c2 = T::one() - self.beta2.powf(t);
        let m_hat = self.m.values().iter().map(|&m| m / c1).collect();
        let v_hat = self.v.values().iter().map(|&v| v / c2).collect();
        Ok((m_hat, v_hat))
    }
}

/// Shadow-moment update with explicit decay rates. Returns the advanced state.
pub fn update_shadow_moments<T: Scalar>(
    mut moments: MomentState<T>,
    grads: &ParameterSet<T>,
    beta1: T,
    beta2: T,
) -> Result<MomentState<T>> {
    moments.beta1 = beta1;
    moments.beta2 = beta2;
    moments.update(grads)?;
    Ok(moments)
}

pub fn bias_corrected<T: Scalar>(moments: &MomentState<T>) -> Result<(Vec<T>, Vec<T>)> {
    moments.bias_corrected()
}

/// Heavy-ball SGD: `buf <- mu buf + g`, `theta <- theta - lr buf`.
pub fn sgd_step<T: Scalar>(
    params: &mut ParameterSet<T>,
    grads: &ParameterSet<T>,
    cfg: &OptimizerConfig,
    velocity: &mut ParameterSet<T>,
) -> Result<()> {
    params.check_layout(grads)?;
    params.check_layout(velocity)?;
    let lr = T::lit(cfg.learning_rate);
    let mu = T::lit(cfg.sgd_momentum);
    for ((p, b), &g) in params
        .values_mut()
        .iter_mut()
        .zip(velocity.values_mut().iter_mut())
        .zip(grads.values())
    {
        *b = mu * *b + g;
        *p -= lr * *b;
    }
    Ok(())
}

/// Adam with bias correction. Advances `moments` by one step.
pub fn adam_step<T: Scalar>(
    params: &mut ParameterSet<T>,
    grads: &ParameterSet<T>,
    cfg: &OptimizerConfig,
    moments: &mut MomentState<T>,
) -> Result<()> {
    params.check_layout(grads)?;
    params.check_layout(&moments.m)?;
    moments.beta1 = T::lit(cfg.adam_beta1);
    moments.beta2 = T::lit(cfg.adam_beta2);
    moments.update(grads)?;
    let (m_hat, v_hat) = moments.bias_corrected()?;
    let lr = T::lit(cfg.learning_rate);
    let eps = T::lit(cfg.adam_eps);
    for ((p, m), v) in params.values_mut().iter_mut().zip(m_hat).zip(v_hat) {
        *p -= lr * m / (v.sqrt() + eps);
    }
    Ok(())
}

/// Optimizer together with its per-parameter state.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    cfg: OptimizerConfig,
    state: OptimizerState<T>,
    steps: u64,
}

#[derive(Debug, Clone)]
enum OptimizerState<T> {
    Sgd { velocity: ParameterSet<T> },
    Adam { moments: MomentState<T> },
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(cfg: OptimizerConfig, layout: &ParameterSet<T>) -> Result<Self> {
        cfg.validate()?;
        let state = match cfg.kind {
            OptimizerKind::Sgd => OptimizerState::Sgd {
                velocity: layout.zeros_like(),
            },
            OptimizerKind::Adam => OptimizerState::Adam {
                moments: MomentState::new(layout, T::lit(cfg.adam_beta1), T::lit(cfg.adam_beta2)),
            },
        };
        Ok(Self { cfg, state, steps: 0 })
    }

    pub fn step(&mut self, params: &mut ParameterSet<T>, grads: &ParameterSet<T>) -> Result<()> {
        match &mut self.state {
            OptimizerState::Sgd { velocity } => sgd_step(params, grads, &self.cfg, velocity)?,
            OptimizerState::Adam { moments } => adam_step(params, grads, &self.cfg, moments)?,
        }
        self.steps += 1;
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }
}
