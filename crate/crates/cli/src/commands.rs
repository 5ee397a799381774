use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use ude_core::datagen::LabeledImageSet;
use ude_core::fairness::{evaluate as fairness_report, head_accuracy, FairnessReport};
use ude_core::models::{FrozenEncoder, LinearHead};
use ude_core::oracle::{EmbeddingOracle, OracleServer};
use ude_core::pipeline::{self, streams, Mode, PipelineConfig};
use ude_core::rng::derive_seed;
use ude_core::ude::{export_noise_map, EditArtifact};

use crate::manifest::RunManifest;
use crate::{Common, SweepParam};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] ude_core::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
}

impl From<std::io::Error> for CliError {
    fn from(source: std::io::Error) -> Self {
        CliError::Io {
            context: "i/o".into(),
            source,
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use ude_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 1,
            CliError::Core(e) => match e {
                E::Config(_) => 2,
                E::CapabilityDenied(_) => 3,
                E::Remote { .. } | E::Protocol(_) | E::Transport(_) => 4,
                E::UndefinedMetric(_) => 5,
                _ => 1,
            },
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

const TRAIN_DIR: &str = "data/train";
const TEST_DIR: &str = "data/test";
const ENCODER_DIR: &str = "encoder";
const SA_HEAD_DIR: &str = "sa_head";
const EDIT_DIR: &str = "edit";
const ERM_HEAD_DIR: &str = "erm_head";
const UDE_HEAD_DIR: &str = "ude_head";

/// Config file (TOML, or the `config` of a JSON run manifest) with the
/// command-line overrides applied.
pub fn load_config(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = match &common.config {
        None => PipelineConfig::default(),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
                context: format!("reading {}", path.display()),
                source,
            })?;
            if path.extension().is_some_and(|e| e == "json") {
                let mut v: serde_json::Value = serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                if let Some(inner) = v.get_mut("config") {
                    v = inner.take();
                }
                serde_json::from_value(v)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            } else {
                toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
        }
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn require(cfg: &PipelineConfig, rel: &str, producer: &str) -> Result<PathBuf> {
    let p = cfg.out.join(rel);
    if !p.exists() {
        return Err(CliError::Io {
            context: format!("{} is missing (run `ude {producer}` first)", p.display()),
            source: std::io::ErrorKind::NotFound.into(),
        });
    }
    Ok(p)
}

/// The saved encoder, checked against the one the configuration builds.
fn load_encoder(cfg: &PipelineConfig) -> Result<Arc<FrozenEncoder<f32>>> {
    let enc = FrozenEncoder::load(require(cfg, ENCODER_DIR, "train-sa")?)?;
    if enc.digest()? != cfg.build_encoder().digest()? {
        return Err(CliError::Config(
            "saved encoder does not match the configured encoder seed".into(),
        ));
    }
    Ok(Arc::new(enc))
}

fn write_text(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> ude_core::Result<()>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn generate(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let train = cfg.generate_train()?;
    let test = cfg.generate_test()?;
    train.save(cfg.out.join(TRAIN_DIR))?;
    test.save(cfg.out.join(TEST_DIR))?;
    log::info!(
        "train {} samples (counts {:?}), test {} samples",
        train.len(),
        train.cell_counts()?.n,
        test.len()
    );
    let mut m = RunManifest::new("generate", &cfg);
    m.output(&cfg, "data")?;
    m.write(&cfg.out)?;
    Ok(())
}

pub fn train_sa(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let train = LabeledImageSet::load(require(&cfg, TRAIN_DIR, "generate")?)?;
    let test = LabeledImageSet::load(require(&cfg, TEST_DIR, "generate")?)?;
    let encoder = Arc::new(cfg.build_encoder());
    encoder.save(cfg.out.join(ENCODER_DIR))?;
    let oracle = EmbeddingOracle::black_box(Arc::clone(&encoder));
    let trained = pipeline::train_sa_head(&cfg, &oracle, &train)?;
    trained.head.save(cfg.out.join(SA_HEAD_DIR))?;
    let acc = head_accuracy(&trained.head, &oracle, None, &test.images, test.sa()?)?;
    log::info!("SA head held-out accuracy {acc:.4}");
    let mut m = RunManifest::new("train-sa", &cfg);
    m.input(&cfg, "data")?;
    m.output(&cfg, ENCODER_DIR)?;
    m.output(&cfg, SA_HEAD_DIR)?;
    m.extra = serde_json::json!({
        "encoder_digest": encoder.digest()?,
        "loss_trace": trained.loss_trace,
        "held_out_accuracy": acc,
    });
    m.write(&cfg.out)?;
    Ok(())
}

pub fn learn_edit(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let train = LabeledImageSet::load(require(&cfg, TRAIN_DIR, "generate")?)?;
    let encoder = load_encoder(&cfg)?;
    let sa_head = LinearHead::load(require(&cfg, SA_HEAD_DIR, "train-sa")?)?;
    let oracle = cfg.edit_oracle(&encoder)?;
    let edit = pipeline::learn_edit(&cfg, &oracle, &sa_head, &train)?;
    edit.save(cfg.out.join(EDIT_DIR))?;
    let q = oracle.queries();
    log::info!(
        "learned {:?} edit, |eps| = {:.4}, {} embed calls ({} samples), {} gradient calls",
        edit.method,
        edit.norm(),
        q.calls,
        q.samples,
        q.grad_calls
    );
    let mut m = RunManifest::new("learn-edit", &cfg);
    m.input(&cfg, TRAIN_DIR)?;
    m.input(&cfg, ENCODER_DIR)?;
    m.input(&cfg, SA_HEAD_DIR)?;
    m.output(&cfg, EDIT_DIR)?;
    m.extra = serde_json::json!({ "queries": q, "eps_norm": edit.norm() });
    m.write(&cfg.out)?;
    Ok(())
}

pub fn train_disease(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let train = LabeledImageSet::load(require(&cfg, TRAIN_DIR, "generate")?)?;
    let encoder = load_encoder(&cfg)?;
    let oracle = EmbeddingOracle::black_box(encoder);
    let erm = pipeline::train_disease_head(&cfg, &oracle, None, &train)?;
    erm.head.save(cfg.out.join(ERM_HEAD_DIR))?;
    let mut m = RunManifest::new("train-disease", &cfg);
    m.input(&cfg, TRAIN_DIR)?;
    m.input(&cfg, ENCODER_DIR)?;
    m.output(&cfg, ERM_HEAD_DIR)?;
    let edit_dir = cfg.out.join(EDIT_DIR);
    if edit_dir.exists() {
        let edit = EditArtifact::load(&edit_dir)?;
        let ude = pipeline::train_disease_head(&cfg, &oracle, Some(&edit.edit()), &train)?;
        ude.head.save(cfg.out.join(UDE_HEAD_DIR))?;
        m.input(&cfg, EDIT_DIR)?;
        m.output(&cfg, UDE_HEAD_DIR)?;
    } else {
        log::info!("no learned edit under {}; trained the ERM head only", edit_dir.display());
    }
    m.write(&cfg.out)?;
    Ok(())
}

#[derive(Serialize)]
struct Comparison {
    erm: FairnessReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    ude: Option<FairnessReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sa_clean_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sa_edited_accuracy: Option<f64>,
}

pub fn evaluate(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let test = LabeledImageSet::load(require(&cfg, TEST_DIR, "generate")?)?;
    let encoder = load_encoder(&cfg)?;
    let oracle = EmbeddingOracle::black_box(encoder);
    let erm_head = LinearHead::load(require(&cfg, ERM_HEAD_DIR, "train-disease")?)?;
    let mut m = RunManifest::new("evaluate", &cfg);
    m.input(&cfg, TEST_DIR)?;
    m.input(&cfg, ENCODER_DIR)?;
    m.input(&cfg, ERM_HEAD_DIR)?;
    let mut cmp = Comparison {
        erm: fairness_report(&erm_head, &oracle, None, &test)?,
        ude: None,
        sa_clean_accuracy: None,
        sa_edited_accuracy: None,
    };
    let (edit_dir, ude_dir) = (cfg.out.join(EDIT_DIR), cfg.out.join(UDE_HEAD_DIR));
    if edit_dir.exists() && ude_dir.exists() {
        let edit = EditArtifact::load(&edit_dir)?.edit();
        let ude_head = LinearHead::load(&ude_dir)?;
        cmp.ude = Some(fairness_report(&ude_head, &oracle, Some(&edit), &test)?);
        m.input(&cfg, EDIT_DIR)?;
        m.input(&cfg, UDE_HEAD_DIR)?;
        if let Ok(sa) = LinearHead::load(cfg.out.join(SA_HEAD_DIR)) {
            cmp.sa_clean_accuracy = Some(head_accuracy(&sa, &oracle, None, &test.images, test.sa()?)?);
            cmp.sa_edited_accuracy =
                Some(head_accuracy(&sa, &oracle, Some(&edit), &test.images, test.sa()?)?);
        }
    }
    ude_core::persist::write_json(cfg.out.join("report.json"), &cmp)?;
    write_text(&cfg.out.join("report.csv"), |w| {
        writeln!(w, "model,{}", FairnessReport::CSV_HEADER)?;
        writeln!(w, "erm,{}", cmp.erm.csv_row())?;
        if let Some(u) = &cmp.ude {
            writeln!(w, "ude,{}", u.csv_row())?;
        }
        Ok(())
    })?;
    println!("model,{}", FairnessReport::CSV_HEADER);
    println!("erm,{}", cmp.erm.csv_row());
    if let Some(u) = &cmp.ude {
        println!("ude,{}", u.csv_row());
    }
    m.output(&cfg, "report.json")?;
    m.output(&cfg, "report.csv")?;
    m.write(&cfg.out)?;
    Ok(())
}

/// Row `i` runs the whole pipeline in memory under
/// `derive_seed(seed, SWEEP + i)`. Sweeping `local-iters` runs GeZO.
pub fn sweep(common: &Common, param: SweepParam, values: &[f64]) -> Result<()> {
    let base = load_config(common)?;
    let name = match param {
        SweepParam::Lambda => "lambda",
        SweepParam::LocalIters => "local_iters",
    };
    let mut rows = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        let mut cfg = base.with_seed(derive_seed(base.seed, streams::SWEEP + i as u64));
        match param {
            SweepParam::Lambda => {
                cfg.ude.lambda = v as f32;
                cfg.gezo.lambda = v as f32;
            }
            SweepParam::LocalIters => {
                if v < 1.0 || v.fract() != 0.0 {
                    return Err(CliError::Config(format!("local_iters must be a positive integer, got {v}")));
                }
                cfg.mode = Mode::Gezo;
                cfg.gezo.local_iters = v as usize;
            }
        }
        let out = pipeline::run(&cfg)?;
        log::info!("{name}={v}: {}", out.ude.csv_row());
        rows.push((v, cfg.seed, out));
    }
    let path = base.out.join(format!("sweep_{name}.csv"));
    write_text(&path, |w| {
        writeln!(w, "value,{},SA_acc,eps_norm,seed", FairnessReport::CSV_HEADER)?;
        for (v, seed, o) in &rows {
            writeln!(w, "{v},{},{},{},{seed}", o.ude.csv_row(), o.sa_edited_accuracy, o.edit.norm())?;
        }
        Ok(())
    })?;
    print!("{}", std::fs::read_to_string(&path)?);
    let mut m = RunManifest::new(&format!("sweep-{name}"), &base);
    m.output(&base, &format!("sweep_{name}.csv"))?;
    m.extra = serde_json::json!({
        "rows": rows.iter().map(|(v, seed, o)| serde_json::json!({
            "value": v, "summary": o.summary(*seed)
        })).collect::<Vec<_>>()
    });
    m.write(&base.out)?;
    Ok(())
}

pub fn serve(common: &Common, address: &str) -> Result<()> {
    let cfg = load_config(common)?;
    let encoder = match FrozenEncoder::load(cfg.out.join(ENCODER_DIR)) {
        Ok(e) => e,
        Err(_) => cfg.build_encoder(),
    };
    let server = OracleServer::bind(address, Arc::new(encoder))?;
    log::info!("serving forward-only embeddings on {}", server.local_addr()?);
    server.serve()?;
    Ok(())
}

pub fn noise_map(common: &Common, edit: Option<&Path>, top_fraction: f32) -> Result<()> {
    let cfg = load_config(common)?;
    let dir = match edit {
        Some(d) => d.to_path_buf(),
        None => require(&cfg, EDIT_DIR, "learn-edit")?,
    };
    let art = EditArtifact::load(&dir)?;
    let side = (art.eps.len() as f64).sqrt().round() as usize;
    let map = export_noise_map(&art.eps, side, top_fraction)?;
    if map.constant {
        log::warn!("edit has constant magnitude; the map and mask are empty");
    }
    write_text(&cfg.out.join("noise_map.csv"), |w| map.write_magnitude_csv(w))?;
    write_text(&cfg.out.join("noise_mask.csv"), |w| map.write_mask_csv(w))?;
    let mut extra = serde_json::json!({
        "edit": dir,
        "top_fraction": top_fraction,
        "constant": map.constant,
        "masked_pixels": map.mask.iter().filter(|&&b| b).count(),
    });
    if let Ok(train) = LabeledImageSet::load(cfg.out.join(TRAIN_DIR)) {
        if let Some(p) = &train.provenance {
            extra["sa_region_mean"] = map.region_mean(&p.config.sa_region).into();
            extra["disease_region_mean"] = map.region_mean(&p.config.disease_region).into();
        }
    }
    let mut m = RunManifest::new("noise-map", &cfg);
    m.outputs.extend(crate::manifest::digest_tree(&cfg.out, &cfg.out.join("noise_map.csv"))?);
    m.outputs.extend(crate::manifest::digest_tree(&cfg.out, &cfg.out.join("noise_mask.csv"))?);
    m.extra = extra;
    m.write(&cfg.out)?;
    Ok(())
}

pub fn run_all(common: &Common) -> Result<()> {
    generate(common)?;
    train_sa(common)?;
    learn_edit(common)?;
    train_disease(common)?;
    evaluate(common)
}
