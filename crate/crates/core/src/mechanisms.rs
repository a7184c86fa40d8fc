//! Local sampling: rewrite the sensitive latent block of every sample and
//! decode the result back into a sanitized dataset.
//!
//! * suppression replaces `z_S` with zeros,
//! * obfuscation clamps `z_S` into a box and adds Laplace noise,
//! * DP sampling fits differentially private per-class Gaussians to a random
//!   orthonormal projection of `z_S` and replaces every row's `z_S` with an
//!   independent labeled draw,
//! * pixel noise and class-mean interpolation are the baselines.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{read_file, save_dataset, load_dataset, write_file, LabeledDataset};
use crate::decoupler::{class_means, DecouplerModel};
use crate::error::{shape_err, Error, Result};
use crate::math::{cholesky_psd, gemm, laplace, psd_repair, random_orthonormal, sample_gaussian, Matrix, RngStream};

pub const SIDECAR: &str = "sanitization.json";
pub const LATENTS_BLOB: &str = "latents.bin";
pub const SYNTHETIC_LABELS_BLOB: &str = "synthetic_labels.bin";
pub const SIDECAR_VERSION: u32 = 1;
pub const DEFAULT_PROJECTION_DIM: usize = 4;

/// Rows encoded/decoded per chunk during sanitization.
const CHUNK: usize = 1024;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub mean_fraction: f64,
    pub cov_fraction: f64,
    /// Obfuscation box `[clip_low, clip_high]` per coordinate.
    pub clip_low: f64,
    pub clip_high: f64,
    /// Radius `R` used to normalize projected latents for DP sampling.
    pub clip_radius: f64,
}

impl Default for PrivacyBudget {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            mean_fraction: 0.3,
            cov_fraction: 0.7,
            clip_low: -3.0,
            clip_high: 3.0,
            clip_radius: 3.0,
        }
    }
}

impl PrivacyBudget {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self {
            epsilon,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Param(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        let frac_ok = |f: f64| f > 0.0 && f < 1.0;
        if !frac_ok(self.mean_fraction)
            || !frac_ok(self.cov_fraction)
            || (self.mean_fraction + self.cov_fraction - 1.0).abs() > 1e-12
        {
            return Err(Error::Param(format!(
                "mean/cov fractions must lie in (0, 1) and sum to 1, got {} + {}",
                self.mean_fraction, self.cov_fraction
            )));
        }
        if !(self.clip_low < self.clip_high) {
            return Err(Error::Param(format!("clip range [{}, {}] is empty", self.clip_low, self.clip_high)));
        }
        if !(self.clip_radius > 0.0) {
            return Err(Error::Param(format!("clip radius must be positive, got {}", self.clip_radius)));
        }
        Ok(())
    }

    pub fn epsilon_mean(&self) -> f64 {
        self.mean_fraction * self.epsilon
    }

    pub fn epsilon_cov(&self) -> f64 {
        self.cov_fraction * self.epsilon
    }
}

/// `z_S` replaced by the zero vector.
pub fn suppress(zs: &[f64]) -> Vec<f64> {
    vec![0.0; zs.len()]
}

/// Clamp each coordinate into `[a, b]`, then add `Lap(k·(b − a)/ε)` noise.
pub fn dp_obfuscate(zs: &[f64], budget: &PrivacyBudget, rng: &mut RngStream) -> Result<Vec<f64>> {
    budget.validate()?;
    let scale = zs.len() as f64 * (budget.clip_high - budget.clip_low) / budget.epsilon;
    Ok(zs
        .iter()
        .map(|&v| v.clamp(budget.clip_low, budget.clip_high) + laplace(scale, rng))
        .collect())
}

/// `x + N(0, σ²)` per coordinate, clamped to `[0, 1]`.
pub fn pixel_noise(x: &[f64], sigma: f64, rng: &mut RngStream) -> Result<Vec<f64>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Param(format!("sigma must be non-negative, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(x.to_vec());
    }
    let normal = rand_distr::Normal::new(0.0, sigma).expect("valid sigma");
    Ok(x.iter().map(|&v| (v + rng.sample(normal)).clamp(0.0, 1.0)).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassGaussian {
    /// Mean in the projected space, already rescaled by `R`.
    pub mean: Vec<f64>,
    /// Covariance in the projected space, already rescaled by `R²`.
    pub cov: Matrix,
    /// Public class prior `n_c / n`.
    pub prior: f64,
    pub count: usize,
}

/// Differentially private per-class Gaussians on projected sensitive latents.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianClassModel {
    /// `p x k` with orthonormal rows.
    pub projection: Matrix,
    pub classes: Vec<ClassGaussian>,
    pub clip_radius: f64,
    pub epsilon_spent: f64,
    pub mean_fraction: f64,
    pub cov_fraction: f64,
}

impl GaussianClassModel {
    pub fn p(&self) -> usize {
        self.projection.rows()
    }

    pub fn k(&self) -> usize {
        self.projection.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p();
        if self.classes.is_empty() {
            return Err(Error::Param("model has no classes".into()));
        }
        let total: f64 = self.classes.iter().map(|c| c.prior).sum();
        if (total - 1.0).abs() > 1e-9 || self.classes.iter().any(|c| !(c.prior >= 0.0)) {
            return Err(Error::Param(format!("class priors must be non-negative and sum to 1, got {total}")));
        }
        for c in &self.classes {
            if c.mean.len() != p || c.cov.shape() != (p, p) {
                return Err(shape_err!("class parameters do not match projection dimension {p}"));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = GmmHeader {
            version: SIDECAR_VERSION,
            p: self.p(),
            k: self.k(),
            clip_radius: self.clip_radius,
            epsilon_spent: self.epsilon_spent,
            mean_fraction: self.mean_fraction,
            cov_fraction: self.cov_fraction,
            classes: self
                .classes
                .iter()
                .map(|c| GmmClassHeader {
                    prior: c.prior,
                    count: c.count,
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(GMM_MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        let mut put = |vals: &[f64]| vals.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        put(self.projection.data());
        for c in &self.classes {
            put(&c.mean);
            put(c.cov.data());
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        if buf.len() < 8 || &buf[..4] != GMM_MAGIC {
            return Err(Error::Format("not a Gaussian class model".into()));
        }
        let len = u32::from_le_bytes(buf[4..8].try_into().unwrap()) as usize;
        let json = buf.get(8..8 + len).ok_or_else(|| Error::Truncated("model header".into()))?;
        let h: GmmHeader = serde_json::from_slice(json)?;
        if h.version != SIDECAR_VERSION {
            return Err(Error::UnsupportedVersion {
                found: h.version,
                expected: SIDECAR_VERSION,
            });
        }
        let body = &buf[8 + len..];
        let want = 8 * (h.p * h.k + h.classes.len() * (h.p + h.p * h.p));
        if body.len() != want {
            return Err(Error::Truncated(format!("model body has {} bytes, expected {want}", body.len())));
        }
        let mut vals = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut take = |n: usize| -> Vec<f64> { vals.by_ref().take(n).collect() };
        let projection = Matrix::from_vec(h.p, h.k, take(h.p * h.k))?;
        let mut classes = Vec::with_capacity(h.classes.len());
        for c in &h.classes {
            let mean = take(h.p);
            let cov = Matrix::from_vec(h.p, h.p, take(h.p * h.p))?;
            classes.push(ClassGaussian {
                mean,
                cov,
                prior: c.prior,
                count: c.count,
            });
        }
        let model = Self {
            projection,
            classes,
            clip_radius: h.clip_radius,
            epsilon_spent: h.epsilon_spent,
            mean_fraction: h.mean_fraction,
            cov_fraction: h.cov_fraction,
        };
        model.validate()?;
        Ok(model)
    }
}

const GMM_MAGIC: &[u8; 4] = b"SGMM";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GmmHeader {
    version: u32,
    p: usize,
    k: usize,
    clip_radius: f64,
    epsilon_spent: f64,
    mean_fraction: f64,
    cov_fraction: f64,
    classes: Vec<GmmClassHeader>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GmmClassHeader {
    prior: f64,
    count: usize,
}

/// Fits one DP Gaussian per class to `W·z_S`.
///
/// Rows are projected, divided by `R` and clipped to the unit ℓ2 ball, which
/// bounds the ℓ1 sensitivity of the class mean by `2√p/n_c` and of the
/// second-moment matrix by `2p/n_c`. The mean gets `ε_μ` and the second
/// moment `ε_Σ`; classes hold disjoint rows so they compose in parallel.
/// Class counts (and hence priors) are treated as public.
pub fn fit_dp_gmm(
    zs: &Matrix,
    labels: &[usize],
    classes: usize,
    budget: &PrivacyBudget,
    p: usize,
    rng: &RngStream,
) -> Result<GaussianClassModel> {
    budget.validate()?;
    let (n, k) = zs.shape();
    if labels.len() != n {
        return Err(shape_err!("{} labels for {n} latent rows", labels.len()));
    }
    if p == 0 || p > k {
        return Err(Error::Param(format!("projection dimension {p} must be in 1..={k}")));
    }
    let mut members = vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::UnknownClass { class: y, classes });
        }
        members[y].push(i);
    }
    for (c, rows) in members.iter().enumerate() {
        if rows.len() < 2 {
            return Err(Error::ClassTooSmall {
                class: c,
                count: rows.len(),
                required: 2,
            });
        }
    }

    let w = random_orthonormal(p, k, &mut rng.split(0))?;
    let r = budget.clip_radius;
    // V = Z_S Wᵀ / R, each row clipped to the unit ball
    let mut v = Matrix::zeros(n, p);
    gemm(zs, false, &w, true, &mut v, 0.0);
    for i in 0..n {
        let row = v.row_mut(i);
        row.iter_mut().for_each(|x| *x /= r);
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1.0 {
            row.iter_mut().for_each(|x| *x /= norm);
        }
    }

    let (eps_mu, eps_cov) = (budget.epsilon_mean(), budget.epsilon_cov());
    let mut fitted = Vec::with_capacity(classes);
    for (c, rows) in members.iter().enumerate() {
        let mut crng = rng.split(1 + c as u64);
        let nc = rows.len() as f64;
        let vc = v.select_rows(rows);
        let mean_scale = 2.0 * (p as f64).sqrt() / (nc * eps_mu);
        let mut m: Vec<f64> = vc.col_means();
        m.iter_mut().for_each(|x| *x += laplace(mean_scale, &mut crng));

        let mut s = Matrix::zeros(p, p);
        gemm(&vc, true, &vc, false, &mut s, 0.0);
        let s = s.scale(1.0 / nc);
        let cov_scale = 2.0 * p as f64 / (nc * eps_cov);
        let mut noisy = s;
        for i in 0..p {
            for j in i..p {
                let e = laplace(cov_scale, &mut crng);
                noisy[(i, j)] += e;
                if i != j {
                    noisy[(j, i)] += e;
                }
            }
        }
        for i in 0..p {
            for j in 0..p {
                noisy[(i, j)] -= m[i] * m[j];
            }
        }
        let cov = psd_repair(&noisy)?.scale(r * r);
        fitted.push(ClassGaussian {
            mean: m.iter().map(|x| x * r).collect(),
            cov,
            prior: nc / n as f64,
            count: rows.len(),
        });
    }
    Ok(GaussianClassModel {
        projection: w,
        classes: fitted,
        clip_radius: r,
        epsilon_spent: eps_mu + eps_cov,
        mean_fraction: budget.mean_fraction,
        cov_fraction: budget.cov_fraction,
    })
}

/// `n` i.i.d. labeled draws: `c ~ prior`, `w ~ N(μ_c, Σ_c)`, `z̃_S = Wᵀw`.
pub fn sample_dp_gmm(model: &GaussianClassModel, n: usize, rng: &mut RngStream) -> Result<(Matrix, Vec<usize>)> {
    model.validate()?;
    let (p, k) = (model.p(), model.k());
    let factors = model
        .classes
        .iter()
        .map(|c| {
            if c.cov.data().iter().all(|&v| v == 0.0) {
                Ok(Matrix::zeros(p, p))
            } else {
                cholesky_psd(&c.cov)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let priors: Vec<f64> = model.classes.iter().map(|c| c.prior).collect();
    let mut w_draws = Matrix::zeros(n, p);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = draw_class(&priors, rng);
        let w = sample_gaussian(&model.classes[c].mean, &factors[c], rng)?;
        w_draws.row_mut(i).copy_from_slice(&w);
        labels.push(c);
    }
    let mut z = Matrix::zeros(n, k);
    gemm(&w_draws, false, &model.projection, false, &mut z, 0.0);
    Ok((z, labels))
}

fn draw_class(priors: &[f64], rng: &mut RngStream) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (c, &p) in priors.iter().enumerate() {
        acc += p;
        if u < acc {
            return c;
        }
    }
    // rounding left u above the last cumulative sum
    priors.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismKind {
    Suppress,
    Obfuscate,
    DpSample,
    PixelNoise,
    Interpolate,
}

impl MechanismKind {
    pub const ALL: [MechanismKind; 5] = [
        MechanismKind::Suppress,
        MechanismKind::Obfuscate,
        MechanismKind::DpSample,
        MechanismKind::PixelNoise,
        MechanismKind::Interpolate,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            MechanismKind::Suppress => "suppress",
            MechanismKind::Obfuscate => "obfuscate",
            MechanismKind::DpSample => "dp-sample",
            MechanismKind::PixelNoise => "pixel-noise",
            MechanismKind::Interpolate => "interpolate",
        }
    }

    pub fn needs_epsilon(self) -> bool {
        matches!(self, MechanismKind::Obfuscate | MechanismKind::DpSample)
    }

    pub fn needs_decoupler(self) -> bool {
        self != MechanismKind::PixelNoise
    }

    /// Whether the mechanism emits synthetic sensitive labels.
    pub fn emits_labels(self) -> bool {
        self == MechanismKind::DpSample
    }
}

impl std::str::FromStr for MechanismKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MechanismKind::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| Error::UnsupportedMechanism(s.to_string()))
    }
}

impl std::fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MechanismConfig {
    pub kind: MechanismKind,
    /// Projection dimension for DP sampling; `None` means `min(4, k)`.
    pub projection_dim: Option<usize>,
    /// Pixel-noise standard deviation.
    pub sigma: f64,
}

impl Default for MechanismConfig {
    fn default() -> Self {
        Self {
            kind: MechanismKind::DpSample,
            projection_dim: None,
            sigma: 0.1,
        }
    }
}

impl MechanismConfig {
    pub fn new(kind: MechanismKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }
}

/// Sanitized release: decoded samples carrying the original labels, plus the
/// latents and synthetic sensitive labels where the mechanism produces them.
#[derive(Clone, Debug, PartialEq)]
pub struct SanitizedDataset {
    /// `X̃` with the original label columns (`Y_S` and `Y_NS`).
    pub data: LabeledDataset,
    /// `z̃_S ‖ z_NS` per row (absent for pixel noise).
    pub latents: Option<Matrix>,
    /// `Ỹ_S`, one column per sensitive attribute (DP sampling only).
    pub synthetic_labels: Option<Vec<Vec<usize>>>,
    pub mechanism: MechanismKind,
    pub budget_used: Option<PrivacyBudget>,
    pub projection_dim: Option<usize>,
    pub sigma: Option<f64>,
    pub decoupler_crc32: Option<u32>,
}

impl SanitizedDataset {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `z̃_S` block of the latents.
    pub fn sensitive_latents(&self, k: usize) -> Option<Matrix> {
        self.latents.as_ref().map(|z| z.cols_range(0, k))
    }

    /// `(X̃, Ỹ_S)`: the release with sensitive columns replaced by the
    /// synthetic labels.
    pub fn with_synthetic_labels(&self) -> Result<LabeledDataset> {
        let synth = self
            .synthetic_labels
            .as_ref()
            .ok_or_else(|| Error::UnsupportedMechanism(format!("{} emits no synthetic sensitive labels", self.mechanism)))?;
        let sens = self.data.sensitive_attributes();
        let mut out = self.data.clone();
        let a = out.schema.len();
        for (col, &idx) in synth.iter().zip(&sens) {
            for (r, &y) in col.iter().enumerate() {
                out.labels[r * a + idx] = y as u16;
            }
        }
        Ok(out)
    }
}

/// Mixed-radix class id over all sensitive attributes.
fn joint_labels(data: &LabeledDataset, sens: &[usize]) -> (Vec<usize>, usize) {
    let mut ids = vec![0usize; data.len()];
    let mut radix = 1usize;
    for &a in sens {
        let card = data.schema[a].cardinality;
        for (id, y) in ids.iter_mut().zip(data.column(a)) {
            *id += y * radix;
        }
        radix *= card;
    }
    (ids, radix)
}

fn split_joint(ids: &[usize], cards: &[usize]) -> Vec<Vec<usize>> {
    let mut cols = Vec::with_capacity(cards.len());
    let mut radix = 1usize;
    for &card in cards {
        cols.push(ids.iter().map(|&id| (id / radix) % card).collect());
        radix *= card;
    }
    cols
}

fn encode_all(model: &DecouplerModel, data: &LabeledDataset) -> Result<Matrix> {
    let n = data.len();
    let mut z = Matrix::zeros(n, model.m());
    let rows: Vec<usize> = (0..n).collect();
    for chunk in rows.chunks(CHUNK) {
        let zc = model.encode_batch(&data.features_of(chunk), None)?;
        for (i, &r) in chunk.iter().enumerate() {
            z.row_mut(r).copy_from_slice(zc.row(i));
        }
    }
    Ok(z)
}

fn decode_all(model: &DecouplerModel, z: &Matrix) -> Result<Vec<f32>> {
    let mut out = Vec::with_capacity(z.rows() * model.input_width());
    let rows: Vec<usize> = (0..z.rows()).collect();
    for chunk in rows.chunks(CHUNK) {
        let x = model.decode_batch(&z.select_rows(chunk))?;
        out.extend(x.data().iter().map(|&v| v as f32));
    }
    Ok(out)
}

/// Sanitizes every row of `data`.
///
/// Latents are the posterior means. The mechanism rewrites the `z_S` block,
/// `(z̃_S ‖ z_NS)` is decoded into `X̃`, and all original label columns are
/// carried over. DP sampling additionally attaches one synthetic label per
/// row; which draw lands on which row never depends on that row's data.
pub fn sanitize_dataset(
    data: &LabeledDataset,
    decoupler: Option<&DecouplerModel>,
    mechanism: &MechanismConfig,
    budget: &PrivacyBudget,
    rng: &RngStream,
) -> Result<SanitizedDataset> {
    data.validate()?;
    let kind = mechanism.kind;
    let mut out = SanitizedDataset {
        data: data.clone(),
        latents: None,
        synthetic_labels: None,
        mechanism: kind,
        budget_used: None,
        projection_dim: None,
        sigma: None,
        decoupler_crc32: None,
    };
    out.data.provenance = None;

    if kind == MechanismKind::PixelNoise {
        let mut prng = rng.split(4);
        let x: Vec<f64> = data.samples.iter().map(|&v| v as f64).collect();
        out.data.samples = pixel_noise(&x, mechanism.sigma, &mut prng)?
            .into_iter()
            .map(|v| v as f32)
            .collect();
        out.sigma = Some(mechanism.sigma);
        return Ok(out);
    }

    let model = decoupler.ok_or_else(|| Error::UnsupportedMechanism(format!("{kind} needs a trained decoupler")))?;
    if model.input_width() != data.sample_dim() {
        return Err(shape_err!(
            "decoupler expects {} inputs, dataset samples have {}",
            model.input_width(),
            data.sample_dim()
        ));
    }
    out.decoupler_crc32 = Some(crc32fast::hash(&model.encode_checkpoint()));
    let sens: Vec<usize> = model
        .sensitive
        .iter()
        .map(|a| data.attribute_index(&a.name))
        .collect::<Result<_>>()?;
    let (k, n) = (model.k(), data.len());
    let mut z = encode_all(model, data)?;

    let new_zs: Matrix = match kind {
        MechanismKind::Suppress => Matrix::zeros(n, k),
        MechanismKind::Obfuscate => {
            budget.validate()?;
            let mut orng = rng.split(3);
            let mut zs = z.cols_range(0, k);
            for i in 0..n {
                let row = dp_obfuscate(zs.row(i), budget, &mut orng)?;
                zs.row_mut(i).copy_from_slice(&row);
            }
            out.budget_used = Some(budget.clone());
            zs
        }
        MechanismKind::DpSample => {
            budget.validate()?;
            let p = mechanism.projection_dim.unwrap_or(DEFAULT_PROJECTION_DIM.min(k));
            let (ids, classes) = joint_labels(data, &sens);
            let gmm = fit_dp_gmm(&z.cols_range(0, k), &ids, classes, budget, p, &rng.split(1))?;
            let (zs, drawn) = sample_dp_gmm(&gmm, n, &mut rng.split(2))?;
            let cards: Vec<usize> = sens.iter().map(|&a| data.schema[a].cardinality).collect();
            out.synthetic_labels = Some(split_joint(&drawn, &cards));
            out.budget_used = Some(budget.clone());
            out.projection_dim = Some(p);
            zs
        }
        MechanismKind::Interpolate => {
            let (ids, classes) = joint_labels(data, &sens);
            let zs = z.cols_range(0, k);
            let means = class_means(&zs, &ids, classes)?;
            let mut irng = rng.split(5);
            let mut moved = zs;
            for (i, &from) in ids.iter().enumerate() {
                let to = irng.random_range(0..classes);
                for ((v, a), b) in moved.row_mut(i).iter_mut().zip(&means[from]).zip(&means[to]) {
                    *v = *v - a + b;
                }
            }
            moved
        }
        MechanismKind::PixelNoise => unreachable!("handled above"),
    };
    for i in 0..n {
        z.row_mut(i)[..k].copy_from_slice(new_zs.row(i));
    }
    out.data.samples = decode_all(model, &z)?;
    out.latents = Some(z);
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    version: u32,
    mechanism: MechanismKind,
    budget_used: Option<PrivacyBudget>,
    projection_dim: Option<usize>,
    sigma: Option<f64>,
    decoupler_crc32: Option<u32>,
    latents: Option<BlobInfo>,
    synthetic_labels: Option<BlobInfo>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlobInfo {
    rows: usize,
    cols: usize,
    crc32: u32,
}

/// Writes the dataset directory plus `sanitization.json` and the optional
/// `latents.bin` (f64 LE) and `synthetic_labels.bin` (u16 LE) blobs.
pub fn save_sanitized(s: &SanitizedDataset, dir: &Path) -> Result<()> {
    save_dataset(&s.data, dir)?;
    let latents = s.latents.as_ref().map(|z| {
        let bytes: Vec<u8> = z.data().iter().flat_map(|v| v.to_le_bytes()).collect();
        let info = BlobInfo {
            rows: z.rows(),
            cols: z.cols(),
            crc32: crc32fast::hash(&bytes),
        };
        (bytes, info)
    });
    let synth = s.synthetic_labels.as_ref().map(|cols| {
        let rows = cols.first().map_or(0, Vec::len);
        let mut bytes = Vec::with_capacity(rows * cols.len() * 2);
        for r in 0..rows {
            for col in cols {
                bytes.extend_from_slice(&(col[r] as u16).to_le_bytes());
            }
        }
        let info = BlobInfo {
            rows,
            cols: cols.len(),
            crc32: crc32fast::hash(&bytes),
        };
        (bytes, info)
    });
    let (latent_info, synth_info) = (
        latents.as_ref().map(|(b, i)| {
            write_file(&dir.join(LATENTS_BLOB), b).map(|_| BlobInfo { ..*i })
        }),
        synth.as_ref().map(|(b, i)| {
            write_file(&dir.join(SYNTHETIC_LABELS_BLOB), b).map(|_| BlobInfo { ..*i })
        }),
    );
    let sidecar = Sidecar {
        version: SIDECAR_VERSION,
        mechanism: s.mechanism,
        budget_used: s.budget_used.clone(),
        projection_dim: s.projection_dim,
        sigma: s.sigma,
        decoupler_crc32: s.decoupler_crc32,
        latents: latent_info.transpose()?,
        synthetic_labels: synth_info.transpose()?,
    };
    let mut json = serde_json::to_vec_pretty(&sidecar)?;
    json.push(b'\n');
    write_file(&dir.join(SIDECAR), &json)
}

pub fn load_sanitized(dir: &Path) -> Result<SanitizedDataset> {
    let data = load_dataset(dir)?;
    let raw = read_file(&dir.join(SIDECAR))?;
    let value: serde_json::Value = serde_json::from_slice(&raw)?;
    let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if version != SIDECAR_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            expected: SIDECAR_VERSION,
        });
    }
    let side: Sidecar = serde_json::from_value(value)?;
    let blob = |name: &str, info: &BlobInfo, width: usize| -> Result<Vec<u8>> {
        let bytes = read_file(&dir.join(name))?;
        if bytes.len() != info.rows * info.cols * width || info.rows != data.len() {
            return Err(Error::Truncated(format!("{name}: {} bytes", bytes.len())));
        }
        if crc32fast::hash(&bytes) != info.crc32 {
            return Err(Error::Checksum(name.into()));
        }
        Ok(bytes)
    };
    let latents = match &side.latents {
        Some(info) => {
            let bytes = blob(LATENTS_BLOB, info, 8)?;
            let vals = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            Some(Matrix::from_vec(info.rows, info.cols, vals)?)
        }
        None => None,
    };
    let synthetic_labels = match &side.synthetic_labels {
        Some(info) => {
            let bytes = blob(SYNTHETIC_LABELS_BLOB, info, 2)?;
            let flat: Vec<usize> = bytes.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]]) as usize).collect();
            Some((0..info.cols).map(|j| flat.iter().skip(j).step_by(info.cols).copied().collect()).collect())
        }
        None => None,
    };
    Ok(SanitizedDataset {
        data,
        latents,
        synthetic_labels,
        mechanism: side.mechanism,
        budget_used: side.budget_used,
        projection_dim: side.projection_dim,
        sigma: side.sigma,
        decoupler_crc32: side.decoupler_crc32,
    })
}
