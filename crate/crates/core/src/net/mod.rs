//! Minimal neural building blocks: activations, tiny MLPs with manual
//! backprop, and the Adam optimizer.

mod activation;
mod adam;
mod mlp;

pub use activation::{huber, huber_loss, sigmoid, softplus, Activation};
pub use adam::{exp_lr_schedule, AdamConfig, AdamState};
pub use mlp::{MlpGrads, Tape, TinyMlp};
