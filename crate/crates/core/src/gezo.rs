//! Greedy zeroth-order search for the universal edit.
//!
//! Only objective values are used. Each local iteration draws one
//! mini-batch and `C` Gaussian perturbations `δ = s·z`, evaluates the
//! objective at `ε − δ` and `ε + δ`, and keeps the candidate with the
//! lowest loss provided it beats the best loss seen so far in the epoch.
//! An accepted candidate is folded into a momentum velocity which is added
//! to `ε`; a rejected iteration shrinks the step size instead. Velocity,
//! step size and best loss restart at every epoch.

use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::datagen::LabeledImageSet;
use crate::error::{Error, Result};
use crate::models::{Embed, LinearHead};
use crate::numerics::{l2_norm, Tensor};
use crate::rng::{self, Rng};
use crate::ude::{edit_loss, EditArtifact, EditMethod, PixelRange};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GezoConfig {
    /// Local iterations per epoch.
    pub local_iters: usize,
    pub init_step: f64,
    pub decay: f64,
    pub momentum: f32,
    /// Perturbations drawn per local iteration.
    pub samples: usize,
    pub batch_size: usize,
    pub lambda: f32,
    pub epochs: usize,
    pub seed: u64,
    pub clamp: Option<PixelRange>,
}

impl Default for GezoConfig {
    fn default() -> Self {
        Self {
            local_iters: 10,
            init_step: 0.01,
            decay: 0.95,
            momentum: 0.9,
            samples: 8,
            batch_size: 64,
            lambda: 0.01,
            epochs: 50,
            seed: 0,
            clamp: None,
        }
    }
}

impl GezoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.local_iters == 0 {
            return Err(Error::Config("local_iters must be at least 1".into()));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(Error::Config(format!("decay must lie in (0, 1), got {}", self.decay)));
        }
        if !(self.momentum >= 0.0 && self.momentum < 1.0) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.samples == 0 || self.batch_size == 0 {
            return Err(Error::Config("samples and batch_size must be at least 1".into()));
        }
        if !(self.init_step >= 0.0 && self.init_step.is_finite()) {
            return Err(Error::Config("init_step must be finite and non-negative".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config("lambda must be finite and non-negative".into()));
        }
        if let Some(r) = self.clamp {
            r.validate()?;
        }
        Ok(())
    }
}

/// A black-box scalar objective over edits, evaluated on a subset of a
/// sample pool.
pub trait EditObjective {
    fn dim(&self) -> usize;
    /// Size of the pool batches are drawn from.
    fn pool_size(&self) -> usize;
    fn batch_loss(&self, eps: &Tensor<f32>, batch: &[usize]) -> Result<f32>;
}

/// The edit objective against a frozen SA head, one embed call per
/// evaluation.
pub struct SaObjective<'a, O> {
    pub oracle: &'a O,
    pub head: &'a LinearHead<f32>,
    pub images: &'a Tensor<f32>,
    pub labels: &'a [u8],
    pub lambda: f32,
    pub clamp: Option<PixelRange>,
}

impl<'a, O: Embed<f32>> SaObjective<'a, O> {
    pub fn new(
        oracle: &'a O,
        head: &'a LinearHead<f32>,
        data: &'a LabeledImageSet,
        lambda: f32,
        clamp: Option<PixelRange>,
    ) -> Result<Self> {
        Ok(Self {
            oracle,
            head,
            images: &data.images,
            labels: data.sa()?,
            lambda,
            clamp,
        })
    }
}

impl<O: Embed<f32>> EditObjective for SaObjective<'_, O> {
    fn dim(&self) -> usize {
        self.images.shape()[1]
    }

    fn pool_size(&self) -> usize {
        self.images.shape()[0]
    }

    fn batch_loss(&self, eps: &Tensor<f32>, batch: &[usize]) -> Result<f32> {
        let x = self.images.select_rows(batch)?;
        let a: Vec<u8> = batch.iter().map(|&i| self.labels[i]).collect();
        edit_loss(self.oracle, self.head, &x, &a, eps, self.lambda, self.clamp)
    }
}

/// Outcome of one greedy search.
#[derive(Clone, Debug, PartialEq)]
pub struct GreedyStep {
    /// The winning signed perturbation, if any candidate beat the incoming
    /// best loss.
    pub direction: Option<Tensor<f32>>,
    pub best_loss: f32,
}

/// Gaussian perturbation scaled by `step`.
fn perturbation(dim: usize, step: f64, rng: &mut Rng) -> Tensor<f32> {
    let s = step as f32;
    let data: Vec<f32> = (0..dim)
        .map(|_| {
            let z: f32 = StandardNormal.sample(rng);
            z * s
        })
        .collect();
    Tensor::from_vec(data).expect("finite perturbation")
}

/// Try `C` perturbations in both signs on one batch and return the best
/// one strictly below `best_loss`. Issues exactly `2·C` objective
/// evaluations, `ε − δ` before `ε + δ`.
pub fn greedy_gradient(
    objective: &impl EditObjective,
    batch: &[usize],
    eps: &Tensor<f32>,
    step: f64,
    samples: usize,
    best_loss: f32,
    rng: &mut Rng,
) -> Result<GreedyStep> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let mut best = GreedyStep {
        direction: None,
        best_loss,
    };
    for _ in 0..samples {
        let delta = perturbation(eps.len(), step, rng);
        for sign in [-1.0f32, 1.0] {
            let signed = delta.scale(sign);
            let candidate = eps.add(&signed)?;
            let loss = objective.batch_loss(&candidate, batch)?;
            if loss < best.best_loss {
                best.best_loss = loss;
                best.direction = Some(signed);
            }
        }
    }
    Ok(best)
}

/// One local iteration as recorded in traces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub epoch: usize,
    pub r: usize,
    pub improved: bool,
    /// `None` while no finite loss has been seen this epoch.
    pub best_loss: Option<f32>,
    /// Step size after this iteration.
    pub step: f64,
}

/// State carried between local iterations of one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct GezoState {
    pub eps: Tensor<f32>,
    pub velocity: Tensor<f32>,
    pub step: f64,
    pub best_loss: f32,
    /// Local iterations completed.
    pub iter: usize,
}

impl GezoState {
    /// Epoch start: zero velocity, initial step, infinite best loss.
    pub fn new(eps: Tensor<f32>, cfg: &GezoConfig) -> Self {
        let velocity = Tensor::zeros(eps.shape());
        Self {
            eps,
            velocity,
            step: cfg.init_step,
            best_loss: f32::INFINITY,
            iter: 0,
        }
    }

    /// Draw a batch, search, then either move with momentum or decay the
    /// step.
    pub fn iterate(
        &mut self,
        objective: &impl EditObjective,
        cfg: &GezoConfig,
        rng: &mut Rng,
    ) -> Result<bool> {
        let pool = objective.pool_size();
        if pool == 0 {
            return Err(Error::Empty("sample pool"));
        }
        let batch = index::sample(rng, pool, cfg.batch_size.min(pool)).into_vec();
        let found = greedy_gradient(
            objective,
            &batch,
            &self.eps,
            self.step,
            cfg.samples,
            self.best_loss,
            rng,
        )?;
        self.iter += 1;
        self.best_loss = found.best_loss;
        match found.direction {
            Some(d) => {
                for (v, &dv) in self.velocity.data_mut().iter_mut().zip(d.data()) {
                    *v = cfg.momentum * *v + dv;
                }
                for (e, &v) in self.eps.data_mut().iter_mut().zip(self.velocity.data()) {
                    *e += v;
                }
                self.eps.validate()?;
                Ok(true)
            }
            None => {
                self.step *= cfg.decay;
                Ok(false)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochOutcome {
    pub eps: Tensor<f32>,
    pub best_loss: f32,
    pub step: f64,
    pub iterations: Vec<IterationRecord>,
}

/// `R` local iterations from a fresh state; returns the final edit.
pub fn gezo_epoch(
    objective: &impl EditObjective,
    eps: Tensor<f32>,
    cfg: &GezoConfig,
    epoch: usize,
    rng: &mut Rng,
) -> Result<EpochOutcome> {
    cfg.validate()?;
    if eps.len() != objective.dim() {
        return Err(Error::shape(format!(
            "edit has {} pixels, objective expects {}",
            eps.len(),
            objective.dim()
        )));
    }
    let mut state = GezoState::new(eps, cfg);
    let mut records = Vec::with_capacity(cfg.local_iters);
    for r in 1..=cfg.local_iters {
        let improved = state.iterate(objective, cfg, rng)?;
        records.push(IterationRecord {
            epoch,
            r,
            improved,
            best_loss: state.best_loss.is_finite().then_some(state.best_loss),
            step: state.step,
        });
    }
    Ok(EpochOutcome {
        eps: state.eps,
        best_loss: state.best_loss,
        step: state.step,
        iterations: records,
    })
}

/// Run `cfg.epochs` epochs from `ε = 0` with one RNG stream seeded by
/// `cfg.seed`.
pub fn run_gezo(objective: &impl EditObjective, cfg: &GezoConfig) -> Result<EditArtifact> {
    cfg.validate()?;
    let mut r = rng::seeded(cfg.seed);
    let mut eps = Tensor::zeros(&[objective.dim()]);
    let mut loss_trace = Vec::with_capacity(cfg.epochs);
    let mut norm_trace = Vec::with_capacity(cfg.epochs);
    let mut iterations = Vec::with_capacity(cfg.epochs * cfg.local_iters);
    for epoch in 0..cfg.epochs {
        let out = gezo_epoch(objective, eps, cfg, epoch, &mut r)?;
        eps = out.eps;
        log::debug!(
            "gezo epoch {epoch}: best {:.5} step {:.6} |eps| {:.4}",
            out.best_loss,
            out.step,
            l2_norm(&eps)
        );
        loss_trace.push(out.best_loss);
        norm_trace.push(l2_norm(&eps));
        iterations.extend(out.iterations);
    }
    Ok(EditArtifact {
        eps,
        method: EditMethod::Gezo,
        clamp: cfg.clamp,
        loss_trace,
        eps_norm_trace: norm_trace,
        iterations,
        config: serde_json::to_value(cfg)?,
        seed: cfg.seed,
    })
}

/// Learn the edit against a frozen SA head using forward calls only.
pub fn learn_ude_gezo(
    oracle: &impl Embed<f32>,
    sa_head: &LinearHead<f32>,
    data: &LabeledImageSet,
    cfg: &GezoConfig,
) -> Result<EditArtifact> {
    let objective = SaObjective::new(oracle, sa_head, data, cfg.lambda, cfg.clamp)?;
    run_gezo(&objective, cfg)
}
