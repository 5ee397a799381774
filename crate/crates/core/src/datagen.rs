//! Synthetic chest-X-ray stand-ins with planted sensitive-attribute and
//! disease signals, and the bias-amplified cell counts used to sample them.
//!
//! An image is a shared base pattern plus three planted blocks:
//!
//! * the SA block, `a · sa_gain · signal_amp`;
//! * the disease block, `y · signal_amp`;
//! * a block read by both labels, `(a + y) · shared_gain · signal_amp`,
//!   which gives an unedited classifier a spurious route from SA to label;
//!
//! plus i.i.d. Gaussian pixel noise.

use std::io::Write;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::persist;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Image side; images are `side × side`, flattened row-major.
    pub side: usize,
    pub sa_region: Vec<usize>,
    pub disease_region: Vec<usize>,
    pub shared_region: Vec<usize>,
    pub signal_amp: f32,
    /// SA block amplitude relative to `signal_amp`.
    pub sa_gain: f32,
    /// Shared block amplitude relative to `signal_amp`.
    pub shared_gain: f32,
    pub noise_sigma: f32,
    pub base_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::with_side(16)
    }
}

/// Row-major indices of a `size × size` block with top-left `(row, col)`.
pub fn block(side: usize, row: usize, col: usize, size: usize) -> Vec<usize> {
    (row..row + size)
        .flat_map(|r| (col..col + size).map(move |c| r * side + c))
        .collect()
}

impl SynthConfig {
    /// Default layout for a given side: SA block top-left, disease block
    /// bottom-right, shared block in the centre, each `side/4` wide.
    pub fn with_side(side: usize) -> Self {
        let b = (side / 4).max(1);
        let mid = side.saturating_sub(b) / 2;
        Self {
            side,
            sa_region: block(side, 0, 0, b),
            disease_region: block(side, side - b, side - b, b),
            shared_region: block(side, mid, mid, b),
            signal_amp: 0.3,
            sa_gain: 3.0,
            shared_gain: 0.2,
            noise_sigma: 0.1,
            base_seed: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.side * self.side
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::Config("image side must be positive".into()));
        }
        if self.sa_region.is_empty() || self.disease_region.is_empty() {
            return Err(Error::Config("SA and disease regions must be nonempty".into()));
        }
        let regions = [&self.sa_region, &self.disease_region, &self.shared_region];
        if let Some(&p) = regions.iter().flat_map(|r| r.iter()).find(|&&p| p >= d) {
            return Err(Error::Config(format!("region pixel {p} outside a {d}-pixel image")));
        }
        let mut seen = vec![0u8; d];
        for (tag, r) in regions.iter().enumerate() {
            for &p in r.iter() {
                if seen[p] != 0 {
                    return Err(Error::Config(format!(
                        "pixel {p} belongs to more than one planted region"
                    )));
                }
                seen[p] = tag as u8 + 1;
            }
        }
        for (name, v) in [
            ("signal_amp", self.signal_amp),
            ("sa_gain", self.sa_gain),
            ("shared_gain", self.shared_gain),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config("noise_sigma must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// The shared base pattern, uniform in `[0, 1)` per pixel.
    pub fn base_pattern(&self) -> Vec<f32> {
        let mut r = rng::seeded(self.base_seed);
        (0..self.dim()).map(|_| rng::uniform_f32(&mut r)).collect()
    }

    pub fn region_mask(region: &[usize], dim: usize) -> Vec<bool> {
        let mut m = vec![false; dim];
        for &p in region {
            m[p] = true;
        }
        m
    }
}

/// Sample counts per `(disease label y, sensitive attribute a)` cell,
/// indexed `n[y][a]`. Group `a = 0` is the first column of the tables
/// these templates come from (M), `a = 1` the second (F).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCounts {
    pub n: [[usize; 2]; 2],
}

impl CellCounts {
    pub fn new(neg_a0: usize, neg_a1: usize, pos_a0: usize, pos_a1: usize) -> Self {
        Self {
            n: [[neg_a0, neg_a1], [pos_a0, pos_a1]],
        }
    }

    pub fn balanced(per_cell: usize) -> Self {
        Self::new(per_cell, per_cell, per_cell, per_cell)
    }

    pub fn pleural_effusion_train() -> Self {
        Self::new(5000, 500, 500, 5000)
    }

    pub fn pleural_effusion_test() -> Self {
        Self::balanced(200)
    }

    pub fn edema_train() -> Self {
        Self::new(5000, 500, 500, 5000)
    }

    pub fn edema_test() -> Self {
        Self::balanced(200)
    }

    pub fn pneumonia_train() -> Self {
        Self::new(1500, 150, 150, 1500)
    }

    pub fn pneumonia_test() -> Self {
        Self::balanced(100)
    }

    pub fn total(&self) -> usize {
        self.n.iter().flatten().sum()
    }

    pub fn get(&self, y: u8, a: u8) -> usize {
        self.n[y as usize][a as usize]
    }

    /// `#(y=1, a) / #(a)` for both groups, straight from the counts.
    pub fn positive_rates(&self) -> Result<[f64; 2]> {
        let mut out = [0.0; 2];
        for (a, rate) in out.iter_mut().enumerate() {
            let group = self.n[0][a] + self.n[1][a];
            if group == 0 {
                return Err(Error::UndefinedMetric(format!("group a={a} is empty")));
            }
            *rate = self.n[1][a] as f64 / group as f64;
        }
        Ok(out)
    }
}

/// Scale a counts template, rounding each cell to the nearest integer.
pub fn amplify_bias(template: &CellCounts, scale: f64) -> Result<CellCounts> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Config(format!("scale must be positive, got {scale}")));
    }
    let mut out = *template;
    for (y, row) in out.n.iter_mut().enumerate() {
        for (a, cell) in row.iter_mut().enumerate() {
            let scaled = (*cell as f64 * scale).round() as usize;
            if *cell > 0 && scaled == 0 {
                return Err(Error::Config(format!(
                    "scale {scale} empties cell (y={y}, a={a}) of {cell} samples"
                )));
            }
            *cell = scaled;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: SynthConfig,
    pub counts: CellCounts,
    pub seed: u64,
}

/// Images `[N×D]` with optional per-sample labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImageSet {
    pub images: Tensor<f32>,
    pub sa_labels: Option<Vec<u8>>,
    pub disease_labels: Option<Vec<u8>>,
    pub provenance: Option<Provenance>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetManifest {
    samples: usize,
    dim: usize,
    provenance: Option<Provenance>,
    sa_region: Option<Vec<usize>>,
    disease_region: Option<Vec<usize>>,
    shared_region: Option<Vec<usize>>,
    images: String,
    sa_labels: Option<String>,
    disease_labels: Option<String>,
    sha256: std::collections::BTreeMap<String, String>,
}

const IMAGES_FILE: &str = "images.udet";
const SA_FILE: &str = "sa_labels.u8";
const DISEASE_FILE: &str = "disease_labels.u8";

impl LabeledImageSet {
    pub fn new(
        images: Tensor<f32>,
        sa_labels: Option<Vec<u8>>,
        disease_labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        let s = Self {
            images,
            sa_labels,
            disease_labels,
            provenance: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, _) = self.images.dims2()?;
        for (name, labels) in [("sa", &self.sa_labels), ("disease", &self.disease_labels)] {
            if let Some(l) = labels {
                if l.len() != n {
                    return Err(Error::shape(format!("{} {name} labels for {n} images", l.len())));
                }
                if l.iter().any(|&v| v > 1) {
                    return Err(Error::Format(format!("{name} labels must be 0 or 1")));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.images.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.images.shape()[1]
    }

    pub fn sa(&self) -> Result<&[u8]> {
        self.sa_labels
            .as_deref()
            .ok_or_else(|| Error::Config("dataset has no sensitive-attribute labels".into()))
    }

    pub fn disease(&self) -> Result<&[u8]> {
        self.disease_labels
            .as_deref()
            .ok_or_else(|| Error::Config("dataset has no disease labels".into()))
    }

    /// Realized cell counts (both label arrays required).
    pub fn cell_counts(&self) -> Result<CellCounts> {
        let (a, y) = (self.sa()?, self.disease()?);
        let mut c = CellCounts::balanced(0);
        for (&a, &y) in a.iter().zip(y) {
            c.n[y as usize][a as usize] += 1;
        }
        Ok(c)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut sha = std::collections::BTreeMap::new();
        self.images.save(dir.join(IMAGES_FILE))?;
        sha.insert(IMAGES_FILE.to_string(), persist::file_digest(dir.join(IMAGES_FILE))?);
        let mut write_labels = |file: &str, labels: &Option<Vec<u8>>| -> Result<Option<String>> {
            match labels {
                Some(l) => {
                    std::fs::write(dir.join(file), l)?;
                    sha.insert(file.to_string(), persist::file_digest(dir.join(file))?);
                    Ok(Some(file.to_string()))
                }
                None => Ok(None),
            }
        };
        let sa_labels = write_labels(SA_FILE, &self.sa_labels)?;
        let disease_labels = write_labels(DISEASE_FILE, &self.disease_labels)?;
        let cfg = self.provenance.as_ref().map(|p| &p.config);
        let manifest = DatasetManifest {
            samples: self.len(),
            dim: self.dim(),
            provenance: self.provenance.clone(),
            sa_region: cfg.map(|c| c.sa_region.clone()),
            disease_region: cfg.map(|c| c.disease_region.clone()),
            shared_region: cfg.map(|c| c.shared_region.clone()),
            images: IMAGES_FILE.to_string(),
            sa_labels,
            disease_labels,
            sha256: sha,
        };
        persist::write_json(dir.join(persist::MANIFEST_FILE), &manifest)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let m: DatasetManifest = persist::read_json(dir.join(persist::MANIFEST_FILE))?;
        let images = Tensor::load(dir.join(&m.images))?;
        if images.shape() != [m.samples, m.dim] {
            return Err(Error::Format(format!(
                "images {:?} disagree with manifest ({} × {})",
                images.shape(),
                m.samples,
                m.dim
            )));
        }
        let read = |f: &Option<String>| -> Result<Option<Vec<u8>>> {
            f.as_ref().map(|f| Ok(std::fs::read(dir.join(f))?)).transpose()
        };
        let set = Self {
            images,
            sa_labels: read(&m.sa_labels)?,
            disease_labels: read(&m.disease_labels)?,
            provenance: m.provenance,
        };
        set.validate()?;
        Ok(set)
    }

    /// One row per sample: index, a, y, then every pixel.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        write!(w, "index,a,y")?;
        for p in 0..self.dim() {
            write!(w, ",p{p}")?;
        }
        writeln!(w)?;
        let label = |l: &Option<Vec<u8>>, i: usize| {
            l.as_ref().map(|v| v[i].to_string()).unwrap_or_default()
        };
        for i in 0..self.len() {
            write!(w, "{i},{},{}", label(&self.sa_labels, i), label(&self.disease_labels, i))?;
            for v in self.images.row(i) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Draw exactly `counts` samples, cell by cell in `(y, a)` order.
pub fn generate(cfg: &SynthConfig, counts: &CellCounts, seed: u64) -> Result<LabeledImageSet> {
    cfg.validate()?;
    let total = counts.total();
    if total == 0 {
        return Err(Error::Empty("cell counts"));
    }
    let d = cfg.dim();
    let base = cfg.base_pattern();
    let sa_mask = SynthConfig::region_mask(&cfg.sa_region, d);
    let dis_mask = SynthConfig::region_mask(&cfg.disease_region, d);
    let shared_mask = SynthConfig::region_mask(&cfg.shared_region, d);
    let sa_amp = cfg.sa_gain * cfg.signal_amp;
    let shared_amp = cfg.shared_gain * cfg.signal_amp;

    let mut r = rng::seeded(seed);
    let mut data = Vec::with_capacity(total * d);
    let mut sa = Vec::with_capacity(total);
    let mut dis = Vec::with_capacity(total);
    for y in 0..2u8 {
        for a in 0..2u8 {
            let (af, yf) = (a as f32, y as f32);
            for _ in 0..counts.get(y, a) {
                for p in 0..d {
                    let mut v = base[p];
                    if sa_mask[p] {
                        v += af * sa_amp;
                    }
                    if dis_mask[p] {
                        v += yf * cfg.signal_amp;
                    }
                    if shared_mask[p] {
                        v += (af + yf) * shared_amp;
                    }
                    if cfg.noise_sigma > 0.0 {
                        let z: f32 = StandardNormal.sample(&mut r);
                        v += cfg.noise_sigma * z;
                    }
                    data.push(v);
                }
                sa.push(a);
                dis.push(y);
            }
        }
    }
    Ok(LabeledImageSet {
        images: Tensor::new(vec![total, d], data)?,
        sa_labels: Some(sa),
        disease_labels: Some(dis),
        provenance: Some(Provenance {
            config: cfg.clone(),
            counts: *counts,
            seed,
        }),
    })
}

/// `#(y=1 ∧ a) / #(a)` per group, from the realized labels.
pub fn subgroup_positive_rate(set: &LabeledImageSet) -> Result<[f64; 2]> {
    set.cell_counts()?.positive_rates()
}
