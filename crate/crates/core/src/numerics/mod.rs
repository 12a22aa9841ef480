//! Tensors, reverse-mode autodiff, training losses, Adam, and the
//! checkpoint container: the numerical backbone for every trainable
//! component.

mod adam;
mod checkpoint;
pub mod conv;
mod gradcheck;
mod losses;
mod tape;
mod tensor;

pub use adam::Adam;
pub use checkpoint::Checkpoint;
pub use gradcheck::{grad_check, grad_check_sampled};
pub use losses::{
    dice_loss, kl_loss, masked_cross_entropy, param_regression_loss, total_vae_loss,
    LossBreakdown, LossError, LossWeights,
};
pub use tape::{Grads, NodeId, Tape};
pub use tensor::Tensor;
