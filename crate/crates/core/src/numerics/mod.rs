//! Dense tensors, losses, and first-order optimizers.
//!
//! Everything downstream is built on [`Tensor`]: images, embeddings, the
//! universal edit and all weights. Gradients are hand-derived; there is no
//! tape.

mod loss;
mod optim;
mod tensor;

pub use loss::{cross_entropy, cross_entropy_with_grad, l2_norm, l2_norm_grad, softmax};
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState};
pub use tensor::{Real, Tensor};
