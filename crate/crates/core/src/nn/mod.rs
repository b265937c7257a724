//! Multilayer perceptrons with explicit reverse-mode rules, likelihood heads
//! and a binary parameter container.

mod checkpoint;
mod heads;
mod mlp;

pub use checkpoint::{load_layers, read_layers, save_layers, write_layers, CHECKPOINT_VERSION};
pub use heads::{
    bernoulli_log_likelihood, bernoulli_log_likelihood_grad, categorical_head, log_softmax_rows,
    softmax_rows,
};
pub use mlp::{
    init_params, init_params_with_variance, mlp_backward, mlp_forward, Activation, Gradients,
    LayerParams, MlpConfig, MlpTrace, INIT_VARIANCE,
};

#[cfg(test)]
mod tests;
