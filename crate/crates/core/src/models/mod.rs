//! The frozen encoder standing in for a hosted foundation model, and the
//! linear classification heads trained on its embeddings.

mod encoder;
mod head;

pub use encoder::{Dense, FrozenEncoder, DEFAULT_BIAS_BOUND, EMBED_DIM, HIDDEN_WIDTH};
pub use head::{train_head, LinearHead, TrainConfig, TrainedHead, NUM_CLASSES};

use crate::error::Result;
use crate::numerics::{Real, Tensor};

/// Something that maps an image batch `[B×D]` to embeddings `[B×E]`.
pub trait Embed<T: Real> {
    fn input_dim(&self) -> usize;
    fn embed_dim(&self) -> usize;
    fn embed(&self, batch: &Tensor<T>) -> Result<Tensor<T>>;
    /// Vector-Jacobian product of the embedding w.r.t. the input batch.
    /// Black-box implementations refuse with `Error::CapabilityDenied`.
    fn input_vjp(&self, batch: &Tensor<T>, upstream: &Tensor<T>) -> Result<Tensor<T>>;
    fn supports_input_grad(&self) -> bool {
        true
    }
}
