//! Minimal dense network engine.

mod mlp;
mod params;
mod tensor;

pub use mlp::{
    argmax_masked, forward, hidden_activations, init_params, kaiming_bound, kaiming_std, loss_and_grad,
    masked_softmax, predict, Activation, Batch, ClassMask, InitScheme, NetworkSpec,
};
pub use params::{ParameterSet, Segment};
pub use tensor::Tensor;
