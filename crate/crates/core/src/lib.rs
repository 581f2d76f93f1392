//! Continual-learning core: a small dense network engine, optimizers,
//! class-incremental task streams with exemplar replay, weight-space
//! consolidation (dormant-parameter reset plus in-training weight averaging)
//! and the evaluation metrics around it.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`, which is what the harness uses.

pub mod checkpoint;
pub mod consolidation;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod tasks;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Params = nn::ParameterSet<f64>;
pub type Batch = nn::Batch<f64>;
pub type Stream = tasks::TaskStream<f64>;
pub type Task = tasks::TaskSpec<f64>;
pub type Buffer = tasks::ReplayBuffer<f64>;
pub type Moments = optim::MomentState<f64>;
pub type Report = consolidation::TaskTrainReport<f64>;
pub type Checkpoint = checkpoint::Checkpoint<f64>;
