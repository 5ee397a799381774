//! End-to-end experiment wiring shared by the command line and the
//! acceptance suite.
//!
//! Every stage draws its seed from the global seed through
//! [`rng::derive_seed`] with a fixed stream label, so a single number
//! reproduces a whole run. The ERM and edited disease heads share a seed
//! and differ only in the edit.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::datagen::{amplify_bias, generate, CellCounts, LabeledImageSet, SynthConfig};
use crate::error::{Error, Result};
use crate::fairness::{evaluate, head_accuracy, FairnessReport};
use crate::gezo::{learn_ude_gezo, GezoConfig};
use crate::models::{train_head, FrozenEncoder, LinearHead, TrainConfig, TrainedHead, DEFAULT_BIAS_BOUND};
use crate::oracle::EmbeddingOracle;
use crate::rng::derive_seed;
use crate::ude::{learn_ude_whitebox, train_fair_disease, Edit, EditArtifact, UdeConfig};

/// Stream labels mixed into the global seed.
pub mod streams {
    pub const ENCODER: u64 = 1;
    pub const TRAIN_DATA: u64 = 2;
    pub const TEST_DATA: u64 = 3;
    pub const SA_HEAD: u64 = 4;
    pub const EDIT: u64 = 5;
    pub const DISEASE_HEAD: u64 = 6;
    /// Sweep row `i` runs with `derive_seed(global, SWEEP + i)`.
    pub const SWEEP: u64 = 1 << 32;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Whitebox,
    Gezo,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleSpec {
    InProcess,
    Remote(SocketAddr),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub mode: Mode,
    pub oracle: OracleSpec,
    pub out: PathBuf,
    /// Overrides the encoder seed derived from `seed`.
    pub encoder_seed: Option<u64>,
    pub encoder_bias_bound: f32,
    pub synth: SynthConfig,
    pub train_counts: CellCounts,
    pub test_counts: CellCounts,
    /// Applied to both count templates.
    pub scale: f64,
    pub sa_head: TrainConfig,
    pub disease_head: TrainConfig,
    pub ude: UdeConfig,
    pub gezo: GezoConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            mode: Mode::Whitebox,
            oracle: OracleSpec::InProcess,
            out: PathBuf::from("runs/default"),
            encoder_seed: None,
            encoder_bias_bound: DEFAULT_BIAS_BOUND,
            synth: SynthConfig::default(),
            train_counts: CellCounts::pleural_effusion_train(),
            test_counts: CellCounts::pleural_effusion_test(),
            scale: 0.1,
            sa_head: TrainConfig::sa_head(0),
            disease_head: TrainConfig::disease_head(0),
            ude: UdeConfig::default(),
            gezo: GezoConfig::default(),
        }
    }
}

/// Seeds of every stage for one global seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct StageSeeds {
    pub encoder: u64,
    pub train_data: u64,
    pub test_data: u64,
    pub sa_head: u64,
    pub edit: u64,
    pub disease_head: u64,
}

impl PipelineConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn seeds(&self) -> StageSeeds {
        let s = |stream| derive_seed(self.seed, stream);
        StageSeeds {
            encoder: self.encoder_seed.unwrap_or_else(|| s(streams::ENCODER)),
            train_data: s(streams::TRAIN_DATA),
            test_data: s(streams::TEST_DATA),
            sa_head: s(streams::SA_HEAD),
            edit: s(streams::EDIT),
            disease_head: s(streams::DISEASE_HEAD),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.sa_head.validate()?;
        self.disease_head.validate()?;
        self.ude.validate()?;
        self.gezo.validate()?;
        if !(self.encoder_bias_bound >= 0.0 && self.encoder_bias_bound.is_finite()) {
            return Err(Error::Config("encoder_bias_bound must be finite and >= 0".into()));
        }
        amplify_bias(&self.train_counts, self.scale)?;
        amplify_bias(&self.test_counts, self.scale)?;
        if self.mode == Mode::Whitebox && matches!(self.oracle, OracleSpec::Remote(_)) {
            return Err(Error::Config(
                "white-box editing needs input gradients, which a remote oracle never provides".into(),
            ));
        }
        Ok(())
    }

    pub fn sa_head_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seeds().sa_head,
            ..self.sa_head
        }
    }

    pub fn disease_head_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seeds().disease_head,
            ..self.disease_head
        }
    }

    pub fn ude_config(&self) -> UdeConfig {
        UdeConfig {
            seed: self.seeds().edit,
            ..self.ude
        }
    }

    pub fn gezo_config(&self) -> GezoConfig {
        GezoConfig {
            seed: self.seeds().edit,
            ..self.gezo
        }
    }

    pub fn build_encoder(&self) -> FrozenEncoder<f32> {
        FrozenEncoder::with_bias_bound(self.seeds().encoder, self.synth.dim(), self.encoder_bias_bound)
    }

    pub fn generate_train(&self) -> Result<LabeledImageSet> {
        let counts = amplify_bias(&self.train_counts, self.scale)?;
        generate(&self.synth, &counts, self.seeds().train_data)
    }

    pub fn generate_test(&self) -> Result<LabeledImageSet> {
        let counts = amplify_bias(&self.test_counts, self.scale)?;
        generate(&self.synth, &counts, self.seeds().test_data)
    }

    /// Oracle for editing: white-box in process, forward-only for GeZO.
    pub fn edit_oracle(&self, encoder: &Arc<FrozenEncoder<f32>>) -> Result<EmbeddingOracle> {
        match (&self.oracle, self.mode) {
            (OracleSpec::InProcess, Mode::Whitebox) => Ok(EmbeddingOracle::white_box(Arc::clone(encoder))),
            (OracleSpec::InProcess, Mode::Gezo) => Ok(EmbeddingOracle::black_box(Arc::clone(encoder))),
            (OracleSpec::Remote(addr), _) => {
                EmbeddingOracle::remote(addr, encoder.input_dim(), encoder.embed_dim())
            }
        }
    }
}

pub fn train_sa_head(
    cfg: &PipelineConfig,
    oracle: &EmbeddingOracle,
    train: &LabeledImageSet,
) -> Result<TrainedHead> {
    train_head(
        LinearHead::zeros(crate::models::Embed::embed_dim(oracle)),
        oracle,
        &train.images,
        train.sa()?,
        &cfg.sa_head_config(),
        None,
    )
}

/// Dispatch on `cfg.mode`.
pub fn learn_edit(
    cfg: &PipelineConfig,
    oracle: &EmbeddingOracle,
    sa_head: &LinearHead<f32>,
    train: &LabeledImageSet,
) -> Result<EditArtifact> {
    match cfg.mode {
        Mode::Whitebox => learn_ude_whitebox(oracle, sa_head, train, &cfg.ude_config()),
        Mode::Gezo => learn_ude_gezo(oracle, sa_head, train, &cfg.gezo_config()),
    }
}

/// Disease head on edited images; `None` trains through a zero edit,
/// which is the ERM baseline.
pub fn train_disease_head(
    cfg: &PipelineConfig,
    oracle: &EmbeddingOracle,
    edit: Option<&Edit>,
    train: &LabeledImageSet,
) -> Result<TrainedHead> {
    let zero;
    let edit = match edit {
        Some(e) => e,
        None => {
            zero = Edit::zeros(train.dim());
            &zero
        }
    };
    train_fair_disease(oracle, edit, train, &cfg.disease_head_config())
}

/// Everything one seed of the reference experiment produces.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub sa_clean_accuracy: f64,
    pub sa_edited_accuracy: f64,
    pub erm: FairnessReport,
    pub ude: FairnessReport,
    pub edit: EditArtifact,
    pub sa_head: TrainedHead,
    pub erm_head: TrainedHead,
    pub ude_head: TrainedHead,
}

#[derive(Clone, Debug, Serialize)]
pub struct OutcomeSummary {
    pub seed: u64,
    pub sa_clean_accuracy: f64,
    pub sa_edited_accuracy: f64,
    pub eps_norm: f32,
    pub erm: FairnessReport,
    pub ude: FairnessReport,
}

impl Outcome {
    pub fn summary(&self, seed: u64) -> OutcomeSummary {
        OutcomeSummary {
            seed,
            sa_clean_accuracy: self.sa_clean_accuracy,
            sa_edited_accuracy: self.sa_edited_accuracy,
            eps_norm: self.edit.norm(),
            erm: self.erm.clone(),
            ude: self.ude.clone(),
        }
    }
}

/// Generate data, train the SA head, learn the edit with `edit_oracle`,
/// train ERM and edited disease heads, and evaluate both on the balanced
/// test set. Heads are trained and evaluated through an in-process
/// forward-only oracle.
pub fn run_with_oracle(
    cfg: &PipelineConfig,
    encoder: &Arc<FrozenEncoder<f32>>,
    edit_oracle: &EmbeddingOracle,
) -> Result<Outcome> {
    cfg.validate()?;
    let train = cfg.generate_train()?;
    let test = cfg.generate_test()?;
    let local = EmbeddingOracle::black_box(Arc::clone(encoder));
    let sa_head = train_sa_head(cfg, &local, &train)?;
    let edit = learn_edit(cfg, edit_oracle, &sa_head.head, &train)?;
    let e = edit.edit();
    let sa_clean_accuracy = head_accuracy(&sa_head.head, &local, None, &test.images, test.sa()?)?;
    let sa_edited_accuracy = head_accuracy(&sa_head.head, &local, Some(&e), &test.images, test.sa()?)?;
    let erm_head = train_disease_head(cfg, &local, None, &train)?;
    let ude_head = train_disease_head(cfg, &local, Some(&e), &train)?;
    let erm = evaluate(&erm_head.head, &local, None, &test)?;
    let ude = evaluate(&ude_head.head, &local, Some(&e), &test)?;
    Ok(Outcome {
        sa_clean_accuracy,
        sa_edited_accuracy,
        erm,
        ude,
        edit,
        sa_head,
        erm_head,
        ude_head,
    })
}

/// [`run_with_oracle`] with the oracle `cfg` asks for.
pub fn run(cfg: &PipelineConfig) -> Result<Outcome> {
    cfg.validate()?;
    let encoder = Arc::new(cfg.build_encoder());
    let oracle = cfg.edit_oracle(&encoder)?;
    run_with_oracle(cfg, &encoder, &oracle)
}
