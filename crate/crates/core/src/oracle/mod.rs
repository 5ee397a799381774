//! Access to the frozen encoder with an explicit capability.
//!
//! A forward-only oracle refuses every gradient request, and a remote
//! oracle is always forward-only because the wire protocol has no
//! gradient message.

pub mod protocol;
mod server;

use std::net::ToSocketAddrs;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

pub use server::{OracleServer, RemoteClient, ServerHandle};

use crate::error::{Error, Result};
use crate::models::{Embed, FrozenEncoder};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    ForwardOnly,
    ForwardWithInputGrad,
}

enum Backing {
    Local(Arc<FrozenEncoder<f32>>),
    Remote {
        client: Mutex<RemoteClient>,
        input_dim: usize,
        embed_dim: usize,
    },
}

/// Cumulative usage of an oracle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct QueryCount {
    pub calls: u64,
    pub samples: u64,
    /// Gradient requests, granted or refused.
    pub grad_calls: u64,
}

pub struct EmbeddingOracle {
    capability: Capability,
    backing: Backing,
    calls: AtomicU64,
    samples: AtomicU64,
    grad_calls: AtomicU64,
}

impl EmbeddingOracle {
    fn with(capability: Capability, backing: Backing) -> Self {
        Self {
            capability,
            backing,
            calls: AtomicU64::new(0),
            samples: AtomicU64::new(0),
            grad_calls: AtomicU64::new(0),
        }
    }

    pub fn white_box(encoder: Arc<FrozenEncoder<f32>>) -> Self {
        Self::with(Capability::ForwardWithInputGrad, Backing::Local(encoder))
    }

    pub fn black_box(encoder: Arc<FrozenEncoder<f32>>) -> Self {
        Self::with(Capability::ForwardOnly, Backing::Local(encoder))
    }

    /// Connect to an [`OracleServer`]. The dimensions are those the caller
    /// expects; responses are checked against them.
    pub fn remote(addr: impl ToSocketAddrs, input_dim: usize, embed_dim: usize) -> Result<Self> {
        let client = RemoteClient::connect(addr)?;
        Ok(Self::with(
            Capability::ForwardOnly,
            Backing::Remote {
                client: Mutex::new(client),
                input_dim,
                embed_dim,
            },
        ))
    }

    pub fn capability(&self) -> Capability {
        self.capability
    }

    pub fn queries(&self) -> QueryCount {
        QueryCount {
            calls: self.calls.load(Ordering::SeqCst),
            samples: self.samples.load(Ordering::SeqCst),
            grad_calls: self.grad_calls.load(Ordering::SeqCst),
        }
    }

    pub fn embed(&self, batch: &Tensor<f32>) -> Result<Tensor<f32>> {
        let (b, d) = batch.dims2()?;
        if b == 0 {
            return Err(Error::Empty("embedding batch"));
        }
        if d != self.input_dim() {
            return Err(Error::shape(format!(
                "oracle expects {} features, batch has {d}",
                self.input_dim()
            )));
        }
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.samples.fetch_add(b as u64, Ordering::SeqCst);
        match &self.backing {
            Backing::Local(enc) => enc.forward(batch),
            Backing::Remote {
                client, embed_dim, ..
            } => {
                let z = client
                    .lock()
                    .map_err(|_| Error::Protocol("client lock poisoned".into()))?
                    .embed(batch)?;
                if z.shape()[1] != *embed_dim {
                    return Err(Error::Protocol(format!(
                        "expected {embed_dim}-wide embeddings, got {}",
                        z.shape()[1]
                    )));
                }
                Ok(z)
            }
        }
    }

    pub fn embed_with_input_grad(
        &self,
        batch: &Tensor<f32>,
        upstream: &Tensor<f32>,
    ) -> Result<Tensor<f32>> {
        self.grad_calls.fetch_add(1, Ordering::SeqCst);
        match (&self.backing, self.capability) {
            (Backing::Local(enc), Capability::ForwardWithInputGrad) => {
                enc.input_grad(batch, upstream)
            }
            _ => Err(Error::CapabilityDenied("oracle is forward-only")),
        }
    }
}

impl Embed<f32> for EmbeddingOracle {
    fn input_dim(&self) -> usize {
        match &self.backing {
            Backing::Local(enc) => enc.input_dim(),
            Backing::Remote { input_dim, .. } => *input_dim,
        }
    }

    fn embed_dim(&self) -> usize {
        match &self.backing {
            Backing::Local(enc) => enc.embed_dim(),
            Backing::Remote { embed_dim, .. } => *embed_dim,
        }
    }

    fn embed(&self, batch: &Tensor<f32>) -> Result<Tensor<f32>> {
        EmbeddingOracle::embed(self, batch)
    }

    fn input_vjp(&self, batch: &Tensor<f32>, upstream: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.embed_with_input_grad(batch, upstream)
    }

    fn supports_input_grad(&self) -> bool {
        self.capability == Capability::ForwardWithInputGrad
    }
}
