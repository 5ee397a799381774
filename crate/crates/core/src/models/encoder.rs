use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Real, Tensor};
use crate::persist::{self, ParamManifest};
use crate::rng;

use super::Embed;

pub const HIDDEN_WIDTH: usize = 64;
pub const EMBED_DIM: usize = 32;
pub const DEFAULT_BIAS_BOUND: f32 = 1.0;

/// Fully connected layer `y = x·W + b` with `W` stored `[in×out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T = f32> {
    weight: Tensor<T>,
    bias: Tensor<T>,
}

impl<T: Real> Dense<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let (_, out) = weight.dims2()?;
        if bias.shape() != [out] {
            return Err(Error::shape(format!(
                "bias {:?} for weight {:?}",
                bias.shape(),
                weight.shape()
            )));
        }
        Ok(Self { weight, bias })
    }

    pub fn weight(&self) -> &Tensor<T> {
        &self.weight
    }

    pub fn bias(&self) -> &Tensor<T> {
        &self.bias
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    fn forward_tanh(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(x.matmul(&self.weight)?.add_row_vector(&self.bias)?.map(T::tanh))
    }

    fn cast<U: Real>(&self) -> Dense<U> {
        Dense {
            weight: self.weight.cast(),
            bias: self.bias.cast(),
        }
    }
}

/// Fixed `D → 64 → 64 → 32` tanh network.
///
/// Weights are drawn once from the seed: for each layer in order, the
/// `in×out` weight matrix row-major with `U(±sqrt(6/(in+out)))`, then the
/// bias with `U(±bias_bound)`, all via [`rng::symmetric_f32`]. There is no
/// way to mutate a constructed encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct FrozenEncoder<T = f32> {
    layers: Vec<Dense<T>>,
    seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct EncoderMeta {
    seed: u64,
    input_dim: usize,
    widths: Vec<usize>,
}

impl FrozenEncoder<f32> {
    pub fn new(seed: u64, input_dim: usize) -> Self {
        Self::with_bias_bound(seed, input_dim, DEFAULT_BIAS_BOUND)
    }

    pub fn with_bias_bound(seed: u64, input_dim: usize, bias_bound: f32) -> Self {
        let mut r = rng::seeded(seed);
        let dims = [input_dim, HIDDEN_WIDTH, HIDDEN_WIDTH, EMBED_DIM];
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0f32 / (fan_in + fan_out) as f32).sqrt();
                let weight: Vec<f32> = (0..fan_in * fan_out)
                    .map(|_| rng::symmetric_f32(&mut r, bound))
                    .collect();
                let bias: Vec<f32> = (0..fan_out)
                    .map(|_| rng::symmetric_f32(&mut r, bias_bound))
                    .collect();
                Dense {
                    weight: Tensor::new(vec![fan_in, fan_out], weight).expect("finite init"),
                    bias: Tensor::new(vec![fan_out], bias).expect("finite init"),
                }
            })
            .collect();
        Self { layers, seed }
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<ParamManifest> {
        let mut params = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            params.push((format!("layer{i}.weight"), l.weight.clone()));
            params.push((format!("layer{i}.bias"), l.bias.clone()));
        }
        let meta = EncoderMeta {
            seed: self.seed,
            input_dim: self.input_dim(),
            widths: self.layers.iter().map(Dense::out_dim).collect(),
        };
        persist::save_params(dir, "frozen_encoder", serde_json::to_value(meta)?, &params)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let (manifest, mut params) = persist::load_params(dir, "frozen_encoder")?;
        let meta: EncoderMeta = serde_json::from_value(manifest.meta)?;
        let mut layers = Vec::new();
        for i in 0..meta.widths.len() {
            let w = params
                .remove(&format!("layer{i}.weight"))
                .ok_or_else(|| Error::Format(format!("missing layer{i}.weight")))?;
            let b = params
                .remove(&format!("layer{i}.bias"))
                .ok_or_else(|| Error::Format(format!("missing layer{i}.bias")))?;
            layers.push(Dense::new(w, b)?);
        }
        let enc = Self::from_layers(meta.seed, layers)?;
        if enc.input_dim() != meta.input_dim {
            return Err(Error::Format("encoder manifest input_dim disagrees with weights".into()));
        }
        Ok(enc)
    }

    /// SHA-256 over the UDET encoding of every parameter, in layer order.
    pub fn digest(&self) -> Result<String> {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for l in &self.layers {
            h.update(l.weight.to_udet_bytes()?);
            h.update(l.bias.to_udet_bytes()?);
        }
        Ok(hex::encode(h.finalize()))
    }
}

impl<T: Real> FrozenEncoder<T> {
    pub fn from_layers(seed: u64, layers: Vec<Dense<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("encoder layers"));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::shape("consecutive encoder layers do not chain"));
            }
        }
        Ok(Self { layers, seed })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn embed_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn cast<U: Real>(&self) -> FrozenEncoder<U> {
        FrozenEncoder {
            layers: self.layers.iter().map(Dense::cast).collect(),
            seed: self.seed,
        }
    }

    fn check_batch(&self, batch: &Tensor<T>) -> Result<usize> {
        let (b, d) = batch.dims2()?;
        if d != self.input_dim() {
            return Err(Error::shape(format!(
                "encoder expects {} input features, batch has {d}",
                self.input_dim()
            )));
        }
        Ok(b)
    }

    /// Activations after every layer; the last entry is the embedding.
    fn activations(&self, batch: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let mut acts: Vec<Tensor<T>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let next = layer.forward_tanh(acts.last().unwrap_or(batch))?;
            acts.push(next);
        }
        Ok(acts)
    }

    pub fn forward(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_batch(batch)?;
        Ok(self.activations(batch)?.pop().expect("at least one layer"))
    }

    /// `(∂φ(x)/∂x)ᵀ · upstream`, row by row.
    pub fn input_grad(&self, batch: &Tensor<T>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        let b = self.check_batch(batch)?;
        if upstream.shape() != [b, self.embed_dim()] {
            return Err(Error::shape(format!(
                "upstream {:?} for batch of {b} with embedding width {}",
                upstream.shape(),
                self.embed_dim()
            )));
        }
        let acts = self.activations(batch)?;
        let mut grad = upstream.clone();
        for (layer, act) in self.layers.iter().zip(&acts).rev() {
            // through tanh: d/du tanh(u) = 1 - tanh(u)^2
            for (g, &a) in grad.data_mut().iter_mut().zip(act.data()) {
                *g = *g * (T::one() - a * a);
            }
            grad = grad.matmul_transposed(&layer.weight)?;
        }
        Ok(grad)
    }
}

impl<T: Real> Embed<T> for FrozenEncoder<T> {
    fn input_dim(&self) -> usize {
        FrozenEncoder::input_dim(self)
    }

    fn embed_dim(&self) -> usize {
        FrozenEncoder::embed_dim(self)
    }

    fn embed(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward(batch)
    }

    fn input_vjp(&self, batch: &Tensor<T>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        self.input_grad(batch, upstream)
    }
}
