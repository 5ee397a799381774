//! Universal debiased editing with input gradients.
//!
//! A single image-shaped edit `ε` is added to every input. It is learned by
//! minimising
//!
//! ```text
//! L(ε) = -(1/B) Σ CE(a_i, g(φ(x_i + ε))) + λ ‖ε‖₂
//! ```
//!
//! over mini-batches with the SA head `g` and the encoder `φ` frozen, i.e.
//! by making the SA head as wrong as possible at small edit norm. A disease
//! head is then trained on `φ(x + ε)`.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datagen::LabeledImageSet;
use crate::error::{Error, Result};
use crate::gezo::IterationRecord;
use crate::models::{train_head, Embed, LinearHead, TrainConfig, TrainedHead, NUM_CLASSES};
use crate::numerics::{
    cross_entropy, cross_entropy_with_grad, l2_norm, l2_norm_grad, OptimizerConfig,
    OptimizerState, Real, Tensor,
};
use crate::persist;
use crate::rng;

/// Closed interval edited pixels are clamped to.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelRange {
    pub lo: f32,
    pub hi: f32,
}

impl PixelRange {
    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(Error::Config(format!(
                "invalid pixel range [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

/// Row-wise `images + eps`, no clamping.
pub fn apply_edit<T: Real>(images: &Tensor<T>, eps: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, d) = images.dims2()?;
    if eps.len() != d {
        return Err(Error::shape(format!(
            "edit has {} pixels, images have {d}",
            eps.len()
        )));
    }
    images.add_row_vector(&eps.clone().reshape(&[d])?)
}

/// Edited batch plus, when clamping, the mask of pixels whose value
/// depends on `ε` (strictly inside the range).
fn edited_batch<T: Real>(
    images: &Tensor<T>,
    eps: &Tensor<T>,
    clamp: Option<PixelRange>,
) -> Result<(Tensor<T>, Option<Vec<bool>>)> {
    let mut x = apply_edit(images, eps)?;
    let Some(r) = clamp else {
        return Ok((x, None));
    };
    let (lo, hi) = (T::from_f64(r.lo as f64), T::from_f64(r.hi as f64));
    let mut live = Vec::with_capacity(x.len());
    for v in x.data_mut() {
        live.push(*v > lo && *v < hi);
        *v = v.max(lo).min(hi);
    }
    Ok((x, Some(live)))
}

/// A fixed edit as applied downstream.
#[derive(Clone, Debug, PartialEq)]
pub struct Edit {
    pub eps: Tensor<f32>,
    pub clamp: Option<PixelRange>,
}

impl Edit {
    pub fn new(eps: Tensor<f32>) -> Self {
        Self { eps, clamp: None }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::new(Tensor::zeros(&[dim]))
    }

    pub fn apply(&self, images: &Tensor<f32>) -> Result<Tensor<f32>> {
        Ok(edited_batch(images, &self.eps, self.clamp)?.0)
    }
}

fn check_labels(labels: &[u8], n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Empty("batch"));
    }
    if labels.len() != n {
        return Err(Error::shape(format!("{} labels for a batch of {n}", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
        return Err(Error::ClassOutOfRange {
            index: bad as usize,
            classes: NUM_CLASSES,
        });
    }
    Ok(())
}

/// The edit objective on one batch, forward only (one embed call).
pub fn edit_loss<T: Real>(
    oracle: &impl Embed<T>,
    head: &LinearHead<T>,
    images: &Tensor<T>,
    labels: &[u8],
    eps: &Tensor<T>,
    lambda: T,
    clamp: Option<PixelRange>,
) -> Result<T> {
    let (n, _) = images.dims2()?;
    check_labels(labels, n)?;
    let (x, _) = edited_batch(images, eps, clamp)?;
    let logits = head.forward(&oracle.embed(&x)?)?;
    let mut ce = T::zero();
    for (row, &a) in logits.data().chunks(NUM_CLASSES).zip(labels) {
        ce += cross_entropy(row, a as usize)?;
    }
    Ok(-ce / T::from_f64(n as f64) + lambda * l2_norm(eps))
}

/// The edit objective and its gradient w.r.t. `eps`.
///
/// The cross-entropy gradient is back-propagated through the head and the
/// encoder's input VJP and summed over the batch; the norm penalty gradient
/// is added once.
pub fn edit_loss_and_grad<T: Real>(
    oracle: &impl Embed<T>,
    head: &LinearHead<T>,
    images: &Tensor<T>,
    labels: &[u8],
    eps: &Tensor<T>,
    lambda: T,
    clamp: Option<PixelRange>,
) -> Result<(T, Tensor<T>)> {
    let (n, d) = images.dims2()?;
    check_labels(labels, n)?;
    let (x, live) = edited_batch(images, eps, clamp)?;
    let logits = head.forward(&oracle.embed(&x)?)?;
    let inv_n = T::one() / T::from_f64(n as f64);
    let mut ce = T::zero();
    let mut dlogits = Vec::with_capacity(n * NUM_CLASSES);
    for (row, &a) in logits.data().chunks(NUM_CLASSES).zip(labels) {
        let (l, g) = cross_entropy_with_grad(row, a as usize)?;
        ce += l;
        dlogits.extend(g.into_iter().map(|v| -v * inv_n));
    }
    let dlogits = Tensor::new(vec![n, NUM_CLASSES], dlogits)?;
    let dz = dlogits.matmul_transposed(head.weight())?;
    let mut dx = oracle.input_vjp(&x, &dz)?;
    if let Some(live) = live {
        for (g, keep) in dx.data_mut().iter_mut().zip(live) {
            if !keep {
                *g = T::zero();
            }
        }
    }
    let mut grad = dx.sum_rows()?.reshape(&[d])?;
    let pen = l2_norm_grad(eps);
    for (g, &p) in grad.data_mut().iter_mut().zip(pen.data()) {
        *g += lambda * p;
    }
    let loss = -ce * inv_n + lambda * l2_norm(eps);
    Ok((loss, grad.reshape(eps.shape())?))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UdeConfig {
    pub lambda: f32,
    pub lr: f32,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Clamp edited pixels; off unless set.
    pub clamp: Option<PixelRange>,
}

impl Default for UdeConfig {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            lr: 0.01,
            epochs: 50,
            batch_size: 64,
            seed: 0,
            clamp: None,
        }
    }
}

impl UdeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if let Some(r) = self.clamp {
            r.validate()?;
        }
        OptimizerConfig::adam(self.lr).validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditMethod {
    Whitebox,
    Gezo,
}

/// A learned edit with its training history.
#[derive(Clone, Debug, PartialEq)]
pub struct EditArtifact {
    pub eps: Tensor<f32>,
    pub method: EditMethod,
    pub clamp: Option<PixelRange>,
    /// Per epoch: mean objective (white-box) or the epoch's best loss (GeZO).
    pub loss_trace: Vec<f32>,
    /// `‖ε‖₂` at the end of each epoch.
    pub eps_norm_trace: Vec<f32>,
    /// Per local iteration, GeZO only.
    pub iterations: Vec<IterationRecord>,
    pub config: serde_json::Value,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct EditMeta {
    method: EditMethod,
    shape: Vec<usize>,
    eps_file: String,
    eps_sha256: String,
    clamp: Option<PixelRange>,
    loss_trace: Vec<f32>,
    eps_norm_trace: Vec<f32>,
    #[serde(default)]
    iterations: Vec<IterationRecord>,
    config: serde_json::Value,
    seed: u64,
}

const EPS_FILE: &str = "eps.udet";
const EDIT_META_FILE: &str = "edit.json";

impl EditArtifact {
    pub fn edit(&self) -> Edit {
        Edit {
            eps: self.eps.clone(),
            clamp: self.clamp,
        }
    }

    pub fn norm(&self) -> f32 {
        l2_norm(&self.eps)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.eps.save(dir.join(EPS_FILE))?;
        let meta = EditMeta {
            method: self.method,
            shape: self.eps.shape().to_vec(),
            eps_file: EPS_FILE.into(),
            eps_sha256: self.eps.digest()?,
            clamp: self.clamp,
            loss_trace: self.loss_trace.clone(),
            eps_norm_trace: self.eps_norm_trace.clone(),
            iterations: self.iterations.clone(),
            config: self.config.clone(),
            seed: self.seed,
        };
        persist::write_json(dir.join(EDIT_META_FILE), &meta)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta: EditMeta = persist::read_json(dir.join(EDIT_META_FILE))?;
        let eps = Tensor::load(dir.join(&meta.eps_file))?;
        if eps.shape() != meta.shape.as_slice() {
            return Err(Error::Format(format!(
                "edit tensor {:?} disagrees with metadata {:?}",
                eps.shape(),
                meta.shape
            )));
        }
        if eps.digest()? != meta.eps_sha256 {
            return Err(Error::Format("edit tensor digest mismatch".into()));
        }
        Ok(Self {
            eps,
            method: meta.method,
            clamp: meta.clamp,
            loss_trace: meta.loss_trace,
            eps_norm_trace: meta.eps_norm_trace,
            iterations: meta.iterations,
            config: meta.config,
            seed: meta.seed,
        })
    }
}

/// Learn `ε` with Adam on the edit objective, starting from zero.
///
/// The SA head and the oracle are only read. Fails with
/// `CapabilityDenied` before doing any work if the oracle cannot provide
/// input gradients.
pub fn learn_ude_whitebox(
    oracle: &impl Embed<f32>,
    sa_head: &LinearHead<f32>,
    data: &LabeledImageSet,
    cfg: &UdeConfig,
) -> Result<EditArtifact> {
    cfg.validate()?;
    if !oracle.supports_input_grad() {
        return Err(Error::CapabilityDenied(
            "white-box editing needs input gradients; use the zeroth-order optimizer",
        ));
    }
    let labels = data.sa()?;
    let n = data.len();
    if n == 0 {
        return Err(Error::Empty("SA training set"));
    }
    let d = data.dim();
    let mut eps = Tensor::zeros(&[d]);
    let mut opt = OptimizerState::new(OptimizerConfig::adam(cfg.lr), &[d])?;
    let mut r = rng::seeded(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut loss_trace = Vec::with_capacity(cfg.epochs);
    let mut norm_trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut r);
        let mut total = 0.0f64;
        for batch in order.chunks(cfg.batch_size) {
            let x = data.images.select_rows(batch)?;
            let a: Vec<u8> = batch.iter().map(|&i| labels[i]).collect();
            let (loss, grad) =
                edit_loss_and_grad(oracle, sa_head, &x, &a, &eps, cfg.lambda, cfg.clamp)?;
            total += loss as f64 * batch.len() as f64;
            opt.step(&mut eps, &grad)?;
        }
        eps.validate()?;
        let mean = (total / n as f64) as f32;
        log::debug!("whitebox epoch {epoch}: loss {mean:.5} |eps| {:.4}", l2_norm(&eps));
        loss_trace.push(mean);
        norm_trace.push(l2_norm(&eps));
    }
    Ok(EditArtifact {
        eps,
        method: EditMethod::Whitebox,
        clamp: cfg.clamp,
        loss_trace,
        eps_norm_trace: norm_trace,
        iterations: Vec::new(),
        config: serde_json::to_value(cfg)?,
        seed: cfg.seed,
    })
}

/// Train a disease head from zero on edited images; the edit is frozen.
pub fn train_fair_disease(
    oracle: &impl Embed<f32>,
    edit: &Edit,
    data: &LabeledImageSet,
    cfg: &TrainConfig,
) -> Result<TrainedHead> {
    let y = data.disease()?;
    train_head(
        LinearHead::zeros(oracle.embed_dim()),
        oracle,
        &data.images,
        y,
        cfg,
        Some(edit),
    )
}

/// Normalized `|ε|` and the mask of its largest entries.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoiseMap {
    pub side: usize,
    /// `|ε|` min-max scaled to `[0, 1]`, row-major.
    pub magnitude: Vec<f32>,
    pub mask: Vec<bool>,
    /// Set when `|ε|` is constant and no ranking exists.
    pub constant: bool,
}

/// Let `k = ceil(top_fraction · D)`. The mask holds every pixel whose
/// magnitude is strictly above the `(k+1)`-th largest magnitude, so ties at
/// the cut are excluded and the mask may hold fewer than `k` pixels.
/// `top_fraction = 1` selects everything.
pub fn export_noise_map(eps: &Tensor<f32>, side: usize, top_fraction: f32) -> Result<NoiseMap> {
    if !(top_fraction > 0.0 && top_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "top_fraction must lie in (0, 1], got {top_fraction}"
        )));
    }
    let d = eps.len();
    if d == 0 || side * side != d {
        return Err(Error::shape(format!("{d} pixels do not form a {side}×{side} image")));
    }
    let abs: Vec<f32> = eps.data().iter().map(|v| v.abs()).collect();
    let lo = abs.iter().copied().fold(f32::INFINITY, f32::min);
    let hi = abs.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    if hi <= lo {
        log::warn!("edit magnitude is constant; noise map is empty");
        return Ok(NoiseMap {
            side,
            magnitude: vec![0.0; d],
            mask: vec![false; d],
            constant: true,
        });
    }
    let magnitude: Vec<f32> = abs.iter().map(|&v| (v - lo) / (hi - lo)).collect();
    let k = ((top_fraction as f64 * d as f64).ceil() as usize).clamp(1, d);
    let mask = if k == d {
        vec![true; d]
    } else {
        let mut sorted = abs.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let cut = sorted[k];
        abs.iter().map(|&v| v > cut).collect()
    };
    Ok(NoiseMap {
        side,
        magnitude,
        mask,
        constant: false,
    })
}

impl NoiseMap {
    pub fn region_mean(&self, region: &[usize]) -> f32 {
        if region.is_empty() {
            return 0.0;
        }
        region.iter().map(|&p| self.magnitude[p]).sum::<f32>() / region.len() as f32
    }

    /// `side` rows of `side` comma-separated magnitudes.
    pub fn write_magnitude_csv(&self, w: &mut impl Write) -> Result<()> {
        for row in self.magnitude.chunks(self.side) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// Same grid with `1` for masked pixels and `0` otherwise.
    pub fn write_mask_csv(&self, w: &mut impl Write) -> Result<()> {
        for row in self.mask.chunks(self.side) {
            let line: Vec<&str> = row.iter().map(|&m| if m { "1" } else { "0" }).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Mean `|ε|` over a set of pixels.
pub fn mean_abs(eps: &Tensor<f32>, region: &[usize]) -> f32 {
    if region.is_empty() {
        return 0.0;
    }
    region.iter().map(|&p| eps.data()[p].abs()).sum::<f32>() / region.len() as f32
}
