//! Synthetic labeled images, the aux/release split and the on-disk dataset
//! format.
//!
//! A dataset directory holds `manifest.json`, `samples.bin` (row-major
//! little-endian `f32`) and `labels.bin` (`N x A` little-endian `u16`).

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{streams, Matrix, RngStream};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";
pub const SAMPLES_BLOB: &str = "samples.bin";
pub const LABELS_BLOB: &str = "labels.bin";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Sensitive,
    NonSensitive,
    Unassigned,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSchema {
    pub name: String,
    pub cardinality: usize,
    pub role: Role,
}

impl AttributeSchema {
    pub fn new(name: impl Into<String>, cardinality: usize, role: Role) -> Self {
        Self {
            name: name.into(),
            cardinality,
            role,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: SynthConfig,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    /// `(H, W, C)`
    pub sample_shape: [usize; 3],
    pub samples: Vec<f32>,
    /// `N x A`, row-major.
    pub labels: Vec<u16>,
    pub schema: Vec<AttributeSchema>,
    pub provenance: Option<Provenance>,
}

impl LabeledDataset {
    pub fn new(
        sample_shape: [usize; 3],
        samples: Vec<f32>,
        labels: Vec<u16>,
        schema: Vec<AttributeSchema>,
    ) -> Result<Self> {
        let ds = Self {
            sample_shape,
            samples,
            labels,
            schema,
            provenance: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn sample_dim(&self) -> usize {
        self.sample_shape.iter().product()
    }

    pub fn len(&self) -> usize {
        self.samples.len() / self.sample_dim().max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.sample_dim();
        if dim == 0 || self.samples.len() % dim != 0 {
            return Err(Error::Format(format!(
                "{} sample values do not tile shape {:?}",
                self.samples.len(),
                self.sample_shape
            )));
        }
        let n = self.len();
        if self.labels.len() != n * self.schema.len() {
            return Err(Error::Format(format!(
                "expected {} labels for {n} rows x {} attributes, got {}",
                n * self.schema.len(),
                self.schema.len(),
                self.labels.len()
            )));
        }
        for (i, a) in self.schema.iter().enumerate() {
            if a.cardinality < 2 {
                return Err(Error::Format(format!("attribute {} needs cardinality >= 2", a.name)));
            }
            if self.schema[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::Format(format!("duplicate attribute name {}", a.name)));
            }
        }
        let a_count = self.schema.len();
        for (j, &l) in self.labels.iter().enumerate() {
            let attr = &self.schema[j % a_count];
            if l as usize >= attr.cardinality {
                return Err(Error::Format(format!(
                    "label {l} out of range for attribute {} (cardinality {})",
                    attr.name, attr.cardinality
                )));
            }
        }
        if let Some(v) = self.samples.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Format(format!("sample value {v} outside [0, 1]")));
        }
        Ok(())
    }

    pub fn attribute_index(&self, name: &str) -> Result<usize> {
        self.schema
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| Error::MissingLabels(format!("attribute {name:?} not in dataset")))
    }

    pub fn attribute(&self, name: &str) -> Result<&AttributeSchema> {
        Ok(&self.schema[self.attribute_index(name)?])
    }

    /// Label column for attribute `idx`.
    pub fn column(&self, idx: usize) -> Vec<usize> {
        let a = self.schema.len();
        self.labels.iter().skip(idx).step_by(a).map(|&l| l as usize).collect()
    }

    pub fn labels_of(&self, name: &str) -> Result<Vec<usize>> {
        Ok(self.column(self.attribute_index(name)?))
    }

    pub fn sensitive_attributes(&self) -> Vec<usize> {
        self.schema
            .iter()
            .enumerate()
            .filter(|(_, a)| a.role == Role::Sensitive)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn first_sensitive(&self) -> Result<usize> {
        self.sensitive_attributes()
            .first()
            .copied()
            .ok_or_else(|| Error::MissingLabels("dataset has no sensitive attribute".into()))
    }

    pub fn first_non_sensitive(&self) -> Result<usize> {
        self.schema
            .iter()
            .position(|a| a.role == Role::NonSensitive)
            .ok_or_else(|| Error::MissingLabels("dataset has no non-sensitive attribute".into()))
    }

    pub fn sample(&self, row: usize) -> &[f32] {
        let d = self.sample_dim();
        &self.samples[row * d..(row + 1) * d]
    }

    /// Samples as an `N x D` matrix of `f64`.
    pub fn features(&self) -> Matrix {
        let data = self.samples.iter().map(|&v| v as f64).collect();
        Matrix::from_vec(self.len(), self.sample_dim(), data).expect("validated shape")
    }

    pub fn features_of(&self, rows: &[usize]) -> Matrix {
        let d = self.sample_dim();
        let mut data = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            data.extend(self.sample(r).iter().map(|&v| v as f64));
        }
        Matrix::from_vec(rows.len(), d, data).expect("sized")
    }

    /// Row subset; provenance does not carry over.
    pub fn select(&self, rows: &[usize]) -> LabeledDataset {
        let d = self.sample_dim();
        let a = self.schema.len();
        let mut samples = Vec::with_capacity(rows.len() * d);
        let mut labels = Vec::with_capacity(rows.len() * a);
        for &r in rows {
            samples.extend_from_slice(self.sample(r));
            labels.extend_from_slice(&self.labels[r * a..(r + 1) * a]);
        }
        LabeledDataset {
            sample_shape: self.sample_shape,
            samples,
            labels,
            schema: self.schema.clone(),
            provenance: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub sensitive_classes: usize,
    pub utility_classes: usize,
    /// Sensitive class weights; empty means uniform.
    pub class_weights: Vec<f64>,
    /// How many of (position, scale, brightness) vary per sample.
    pub nuisance_factors: usize,
    /// Probability that the utility class is tied to the sensitive class.
    pub correlation: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 20_000,
            height: 16,
            width: 16,
            channels: 3,
            sensitive_classes: 4,
            utility_classes: 2,
            class_weights: Vec::new(),
            nuisance_factors: 3,
            correlation: 0.0,
        }
    }
}

pub const SENSITIVE_ATTR: &str = "sensitive";
pub const UTILITY_ATTR: &str = "utility";

const MAX_SHAPES: usize = 4;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if self.channels != 3 {
            return bad(format!("only 3-channel images are rendered, got {}", self.channels));
        }
        if self.height < 4 || self.width < 4 {
            return bad("images must be at least 4x4".into());
        }
        if self.sensitive_classes < 2 {
            return bad("sensitive_classes must be >= 2".into());
        }
        if !(2..=MAX_SHAPES).contains(&self.utility_classes) {
            return bad(format!("utility_classes must be in 2..={MAX_SHAPES}"));
        }
        if self.nuisance_factors > 3 {
            return bad("nuisance_factors must be <= 3".into());
        }
        if !(0.0..=1.0).contains(&self.correlation) {
            return bad(format!("correlation must be in [0, 1], got {}", self.correlation));
        }
        if !self.class_weights.is_empty() {
            if self.class_weights.len() != self.sensitive_classes {
                return bad("class_weights needs one entry per sensitive class".into());
            }
            if self.class_weights.iter().any(|w| !(*w >= 0.0)) {
                return bad("class_weights must be non-negative".into());
            }
            if (self.class_weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return bad("class_weights must sum to 1".into());
            }
        }
        Ok(())
    }

    fn weights(&self) -> Vec<f64> {
        if self.class_weights.is_empty() {
            vec![1.0 / self.sensitive_classes as f64; self.sensitive_classes]
        } else {
            self.class_weights.clone()
        }
    }
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let i = h6.floor();
    let f = h6 - i;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match i as u32 % 6 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

fn pick(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Signed distance (pixels) from a point to the foreground shape; negative inside.
fn shape_distance(shape: usize, dx: f64, dy: f64, size: f64) -> f64 {
    let boxd = |hx: f64, hy: f64| {
        let qx = dx.abs() - hx;
        let qy = dy.abs() - hy;
        let outside = (qx.max(0.0).powi(2) + qy.max(0.0).powi(2)).sqrt();
        outside + qx.max(qy).min(0.0)
    };
    match shape {
        0 => (dx * dx + dy * dy).sqrt() - size,
        1 => boxd(size * 1.6, size * 0.45),
        2 => boxd(size * 0.45, size * 1.6),
        _ => boxd(size * 0.8, size * 0.8),
    }
}

fn render_row(cfg: &SynthConfig, weights: &[f64], rng: &mut RngStream, out: &mut [f32]) -> (u16, u16) {
    let s = pick(weights, rng.random::<f64>());
    let tied = rng.random::<f64>() < cfg.correlation;
    let free_u = rng.random_range(0..cfg.utility_classes);
    let u = if tied { s % cfg.utility_classes } else { free_u };
    let band = 1.0 / cfg.sensitive_classes as f64;
    let hue = (s as f64 + 0.5) * band + rng.random_range(-0.3..0.3) * band;
    let (h, w) = (cfg.height as f64, cfg.width as f64);
    let base = h.min(w) / 5.0;
    let mut cx = (w - 1.0) / 2.0;
    let mut cy = (h - 1.0) / 2.0;
    let mut size = base;
    let mut bright = 1.0;
    let jitter_x: f64 = rng.random_range(-1.0..1.0);
    let jitter_y: f64 = rng.random_range(-1.0..1.0);
    let scale: f64 = rng.random_range(0.75..1.25);
    let light: f64 = rng.random_range(0.7..1.0);
    if cfg.nuisance_factors >= 1 {
        cx += jitter_x * w * 0.18;
        cy += jitter_y * h * 0.18;
    }
    if cfg.nuisance_factors >= 2 {
        size *= scale;
    }
    if cfg.nuisance_factors >= 3 {
        bright = light;
    }
    let fg = 0.95 * bright;
    for y in 0..cfg.height {
        let grad = 0.35 + 0.55 * y as f64 / (h - 1.0);
        let bg = hsv_to_rgb(hue, 0.85, grad * bright);
        for x in 0..cfg.width {
            let d = shape_distance(u, x as f64 - cx, y as f64 - cy, size);
            let cover = (0.5 - d).clamp(0.0, 1.0);
            let px = &mut out[(y * cfg.width + x) * 3..][..3];
            for c in 0..3 {
                px[c] = (bg[c] * (1.0 - cover) + fg * cover).clamp(0.0, 1.0) as f32;
            }
        }
    }
    (s as u16, u as u16)
}

/// Renders `cfg.n` labeled images. Row `i` depends only on `(seed, i)`.
///
/// The sensitive class sets the hue band of a vertical background gradient;
/// the utility class picks the foreground shape (disc, horizontal bar,
/// vertical bar, square).
pub fn generate_synthetic(cfg: &SynthConfig, seed: u64) -> Result<LabeledDataset> {
    cfg.validate()?;
    let dim = cfg.height * cfg.width * cfg.channels;
    let weights = cfg.weights();
    let base = RngStream::new(seed, streams::DATA);
    let mut samples = vec![0f32; cfg.n * dim];
    let mut labels = vec![0u16; cfg.n * 2];
    for (i, (row, lab)) in samples.chunks_mut(dim).zip(labels.chunks_mut(2)).enumerate() {
        let mut rng = base.split(i as u64);
        let (s, u) = render_row(cfg, &weights, &mut rng, row);
        lab[0] = s;
        lab[1] = u;
    }
    Ok(LabeledDataset {
        sample_shape: [cfg.height, cfg.width, cfg.channels],
        samples,
        labels,
        schema: vec![
            AttributeSchema::new(SENSITIVE_ATTR, cfg.sensitive_classes, Role::Sensitive),
            AttributeSchema::new(UTILITY_ATTR, cfg.utility_classes, Role::NonSensitive),
        ],
        provenance: Some(Provenance {
            generator: cfg.clone(),
            seed,
        }),
    })
}

/// Shuffled disjoint partition: `⌊fraction·n⌋` indices, then the rest.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Param(format!("split fraction must be in (0, 1), got {fraction}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut RngStream::new(seed, streams::SPLIT));
    let cut = (fraction * n as f64).floor() as usize;
    let rest = idx.split_off(cut);
    Ok((idx, rest))
}

pub fn split_aux_sensitive(data: &LabeledDataset, fraction: f64, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    let (a, b) = split_indices(data.len(), fraction, seed)?;
    Ok((data.select(&a), data.select(&b)))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct Manifest {
    pub version: u32,
    pub n: usize,
    pub sample_shape: [usize; 3],
    pub dtype: String,
    pub label_dtype: String,
    pub attributes: Vec<AttributeSchema>,
    pub seed: Option<u64>,
    pub generator: Option<SynthConfig>,
    pub crc32: Checksums,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct Checksums {
    pub samples: u32,
    pub labels: u32,
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn f32_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn f32_from_bytes(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

pub fn save_dataset(data: &LabeledDataset, dir: &Path) -> Result<()> {
    data.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let samples = f32_bytes(&data.samples);
    let labels: Vec<u8> = data.labels.iter().flat_map(|v| v.to_le_bytes()).collect();
    let manifest = Manifest {
        version: FORMAT_VERSION,
        n: data.len(),
        sample_shape: data.sample_shape,
        dtype: "f32le".into(),
        label_dtype: "u16le".into(),
        attributes: data.schema.clone(),
        seed: data.provenance.as_ref().map(|p| p.seed),
        generator: data.provenance.as_ref().map(|p| p.generator.clone()),
        crc32: Checksums {
            samples: crc32fast::hash(&samples),
            labels: crc32fast::hash(&labels),
        },
    };
    write_file(&dir.join(SAMPLES_BLOB), &samples)?;
    write_file(&dir.join(LABELS_BLOB), &labels)?;
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    write_file(&dir.join(MANIFEST), &json)
}

pub fn load_dataset(dir: &Path) -> Result<LabeledDataset> {
    let raw = read_file(&dir.join(MANIFEST))?;
    let value: serde_json::Value = serde_json::from_slice(&raw)?;
    let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let m: Manifest = serde_json::from_value(value)?;
    if m.dtype != "f32le" || m.label_dtype != "u16le" {
        return Err(Error::Format(format!("unsupported dtypes {} / {}", m.dtype, m.label_dtype)));
    }
    let dim: usize = m.sample_shape.iter().product();
    let samples = read_file(&dir.join(SAMPLES_BLOB))?;
    let labels = read_file(&dir.join(LABELS_BLOB))?;
    let want_s = m.n * dim * 4;
    let want_l = m.n * m.attributes.len() * 2;
    if samples.len() != want_s {
        return Err(Error::Truncated(format!("{SAMPLES_BLOB}: {} bytes, expected {want_s}", samples.len())));
    }
    if labels.len() != want_l {
        return Err(Error::Truncated(format!("{LABELS_BLOB}: {} bytes, expected {want_l}", labels.len())));
    }
    if crc32fast::hash(&samples) != m.crc32.samples {
        return Err(Error::Checksum(SAMPLES_BLOB.into()));
    }
    if crc32fast::hash(&labels) != m.crc32.labels {
        return Err(Error::Checksum(LABELS_BLOB.into()));
    }
    let provenance = match (m.generator, m.seed) {
        (Some(generator), Some(seed)) => Some(Provenance { generator, seed }),
        _ => None,
    };
    let ds = LabeledDataset {
        sample_shape: m.sample_shape,
        samples: f32_from_bytes(&samples),
        labels: labels
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect(),
        schema: m.attributes,
        provenance,
    };
    ds.validate()?;
    Ok(ds)
}
