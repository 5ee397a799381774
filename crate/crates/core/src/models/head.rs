use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{cross_entropy_with_grad, OptimizerConfig, OptimizerState, Real, Tensor};
use crate::persist::{self, ParamManifest};
use crate::rng;
use crate::ude::Edit;

use super::Embed;

/// Both heads are binary classifiers.
pub const NUM_CLASSES: usize = 2;

/// Affine map from embeddings to two logits.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearHead<T = f32> {
    weight: Tensor<T>,
    bias: Tensor<T>,
}

impl<T: Real> LinearHead<T> {
    pub fn zeros(embed_dim: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[embed_dim, NUM_CLASSES]),
            bias: Tensor::zeros(&[NUM_CLASSES]),
        }
    }

    pub fn new(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let (_, k) = weight.dims2()?;
        if k != NUM_CLASSES || bias.shape() != [NUM_CLASSES] {
            return Err(Error::shape(format!(
                "head weight {:?} / bias {:?}, need [E×{NUM_CLASSES}] / [{NUM_CLASSES}]",
                weight.shape(),
                bias.shape()
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

    pub fn embed_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, z: &Tensor<T>) -> Result<Tensor<T>> {
        let (_, e) = z.dims2()?;
        if e != self.embed_dim() {
            return Err(Error::shape(format!(
                "head expects {}-wide embeddings, got {e}",
                self.embed_dim()
            )));
        }
        z.matmul(&self.weight)?.add_row_vector(&self.bias)
    }

    /// Argmax class per row; equal logits predict class 0.
    pub fn predict(&self, z: &Tensor<T>) -> Result<Vec<u8>> {
        let logits = self.forward(z)?;
        Ok(logits
            .data()
            .chunks(NUM_CLASSES)
            .map(|l| u8::from(l[1] > l[0]))
            .collect())
    }

    pub fn cast<U: Real>(&self) -> LinearHead<U> {
        LinearHead {
            weight: self.weight.cast(),
            bias: self.bias.cast(),
        }
    }
}

impl LinearHead<f32> {
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<ParamManifest> {
        persist::save_params(
            dir,
            "linear_head",
            serde_json::json!({ "classes": NUM_CLASSES, "embed_dim": self.embed_dim() }),
            &[
                ("weight".to_string(), self.weight.clone()),
                ("bias".to_string(), self.bias.clone()),
            ],
        )
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let (_, mut p) = persist::load_params(dir, "linear_head")?;
        let w = p.remove("weight").ok_or_else(|| Error::Format("missing head weight".into()))?;
        let b = p.remove("bias").ok_or_else(|| Error::Format("missing head bias".into()))?;
        Self::new(w, b)
    }

    pub fn digest(&self) -> Result<String> {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.weight.to_udet_bytes()?);
        h.update(self.bias.to_udet_bytes()?);
        Ok(hex::encode(h.finalize()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Sensitive-attribute head: Adam, lr 1e-4, 50 epochs.
    pub fn sa_head(seed: u64) -> Self {
        Self {
            optimizer: OptimizerConfig::adam(1e-4),
            epochs: 50,
            batch_size: 64,
            seed,
        }
    }

    /// Disease head: AdamW, lr 1.25e-4, 50 epochs.
    pub fn disease_head(seed: u64) -> Self {
        Self {
            optimizer: OptimizerConfig::adamw(1.25e-4),
            epochs: 50,
            batch_size: 64,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        self.optimizer.validate()
    }
}

#[derive(Clone, Debug)]
pub struct TrainedHead {
    pub head: LinearHead<f32>,
    /// Mean cross-entropy per epoch.
    pub loss_trace: Vec<f32>,
}

/// Train `head` on `φ(x + edit)` with labels in `{0, 1}`.
///
/// Embeddings are computed once through `oracle` (the encoder is frozen and
/// the edit fixed, so they do not change between epochs). Each epoch visits
/// the samples in a fresh Fisher-Yates order drawn from `cfg.seed`.
pub fn train_head(
    head: LinearHead<f32>,
    oracle: &impl Embed<f32>,
    images: &Tensor<f32>,
    labels: &[u8],
    cfg: &TrainConfig,
    edit: Option<&Edit>,
) -> Result<TrainedHead> {
    cfg.validate()?;
    let (n, _) = images.dims2()?;
    if n == 0 {
        return Err(Error::Empty("training set"));
    }
    if labels.len() != n {
        return Err(Error::shape(format!("{} labels for {n} images", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
        return Err(Error::ClassOutOfRange {
            index: bad as usize,
            classes: NUM_CLASSES,
        });
    }
    let inputs = match edit {
        Some(e) => e.apply(images)?,
        None => images.clone(),
    };
    let z = oracle.embed(&inputs)?;

    let mut head = head;
    let mut w_opt = OptimizerState::new(cfg.optimizer, head.weight.shape())?;
    let mut b_opt = OptimizerState::new(cfg.optimizer, head.bias.shape())?;
    let mut rng = rng::seeded(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0f64;
        for batch in order.chunks(cfg.batch_size) {
            let zb = z.select_rows(batch)?;
            let logits = head.forward(&zb)?;
            let scale = 1.0 / batch.len() as f32;
            let mut dlogits = Vec::with_capacity(batch.len() * NUM_CLASSES);
            for (row, &i) in logits.data().chunks(NUM_CLASSES).zip(batch) {
                let (loss, g) = cross_entropy_with_grad(row, labels[i] as usize)?;
                epoch_loss += loss as f64;
                dlogits.extend(g.into_iter().map(|v| v * scale));
            }
            let dlogits = Tensor::new(vec![batch.len(), NUM_CLASSES], dlogits)?;
            let gw = zb.transposed_matmul(&dlogits)?;
            let gb = dlogits.sum_rows()?;
            w_opt.step(&mut head.weight, &gw)?;
            b_opt.step(&mut head.bias, &gb)?;
        }
        let mean = (epoch_loss / n as f64) as f32;
        if !mean.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        trace.push(mean);
    }
    Ok(TrainedHead {
        head,
        loss_trace: trace,
    })
}
