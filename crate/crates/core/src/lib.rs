//! Universal debiased editing: learn one additive image edit that hides a
//! sensitive attribute from the embeddings of a frozen encoder, with input
//! gradients or with forward calls only, and measure the fairness of
//! disease classifiers trained on the edited embeddings.

pub mod datagen;
pub mod error;
pub mod fairness;
pub mod gezo;
pub mod models;
pub mod numerics;
pub mod oracle;
pub mod persist;
pub mod pipeline;
pub mod rng;
pub mod ude;

pub use error::{Error, Result};
