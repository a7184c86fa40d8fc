//! Global decoupler: a VAE whose latent `z` is split at `k` into a sensitive
//! block `z_S = z[..k]` and a non-sensitive block `z_NS = z[k..]`.
//!
//! The encoder, decoder and aligner minimize
//! `α₁·L1 + α₂·L2 + α₃·L3 − α₄·L4`, while the adversary minimizes `L4`:
//!
//! * `L1`: β-VAE loss (Bernoulli reconstruction + β·KL), batch mean
//! * `L2`: aligner loss predicting `y_S` from `z_S`
//! * `L3`: distance correlation between `z_S` and `z_NS`
//! * `L4`: adversary loss predicting `y_S` from `z_NS`
//!
//! Training only ever sees the auxiliary dataset.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::{
    adam_step, bce_logit, codec, AdamConfig, AdamState, Activation, Graph, Head, Network, NetworkSpec,
    ParamSet, ParamVars, Var,
};
use crate::data::{AttributeSchema, LabeledDataset};
use crate::dcorr::DEGENERATE_DCOV;
use crate::error::{shape_err, Error, Result};
use crate::math::{standard_normal_matrix, streams, Matrix, RngStream};

pub const MIN_BATCH: usize = 64;

/// Loss used by the aligner and adversary heads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    CrossEntropy,
    /// Squared ℓ2 distance between softmax probabilities and the one-hot label.
    SquaredL2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecouplerConfig {
    pub k: usize,
    pub m: usize,
    pub beta: f64,
    pub alpha: [f64; 4],
    pub epochs: usize,
    pub batch_size: usize,
    pub adversary_steps: usize,
    pub aligner_loss: LossKind,
    pub adversary_loss: LossKind,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub aligner_hidden: Vec<usize>,
    pub adversary_hidden: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    pub adversary_learning_rate: f64,
}

impl Default for DecouplerConfig {
    fn default() -> Self {
        Self {
            k: 8,
            m: 32,
            beta: 5.0,
            alpha: [1.0, 1.0, 100.0, 1.0],
            epochs: 30,
            batch_size: 64,
            adversary_steps: 1,
            aligner_loss: LossKind::CrossEntropy,
            adversary_loss: LossKind::CrossEntropy,
            encoder_hidden: vec![128],
            decoder_hidden: vec![128],
            aligner_hidden: vec![32],
            adversary_hidden: vec![64],
            activation: Activation::Relu,
            learning_rate: 1e-3,
            adversary_learning_rate: 1e-3,
        }
    }
}

impl DecouplerConfig {
    /// The β-VAE variant: aligner, dcorr and adversary terms switched off.
    pub fn beta_vae_only(&self) -> Self {
        Self {
            alpha: [self.alpha[0], 0.0, 0.0, 0.0],
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.k == 0 || self.k >= self.m {
            return bad(format!("need 1 <= k < m, got k={}, m={}", self.k, self.m));
        }
        if self.alpha.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) || !(self.beta >= 0.0) {
            return bad("alpha weights and beta must be finite and non-negative".into());
        }
        if self.batch_size < MIN_BATCH {
            return bad(format!("batch_size must be >= {MIN_BATCH}, got {}", self.batch_size));
        }
        if !(self.learning_rate > 0.0) || !(self.adversary_learning_rate > 0.0) {
            return bad("learning rates must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecouplerParams {
    pub encoder: Network,
    pub decoder: Network,
    pub aligner: Network,
    pub adversary: Network,
}

impl DecouplerParams {
    fn quantize(&mut self) {
        for net in [&mut self.encoder, &mut self.decoder, &mut self.aligner, &mut self.adversary] {
            net.params.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }
}

/// Trained decoupler together with everything needed to reuse it.
#[derive(Clone, Debug, PartialEq)]
pub struct DecouplerModel {
    pub config: DecouplerConfig,
    pub sample_shape: [usize; 3],
    /// Sensitive attributes, in head order.
    pub sensitive: Vec<AttributeSchema>,
    pub params: DecouplerParams,
}

/// A latent vector split at `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCode {
    pub z: Vec<f64>,
    pub k: usize,
}

impl LatentCode {
    pub fn new(z: Vec<f64>, k: usize) -> Result<Self> {
        if k == 0 || k >= z.len() {
            return Err(shape_err!("split index {k} invalid for latent of length {}", z.len()));
        }
        Ok(Self { z, k })
    }

    pub fn sensitive(&self) -> &[f64] {
        &self.z[..self.k]
    }

    pub fn non_sensitive(&self) -> &[f64] {
        &self.z[self.k..]
    }
}

/// Per-term loss values for one batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossValues {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub l4: f64,
    pub joint: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub losses: LossValues,
}

#[derive(Clone, Debug)]
pub struct TrainedDecoupler {
    pub model: DecouplerModel,
    pub epochs: Vec<EpochLoss>,
    pub steps: Vec<LossValues>,
}

/// One minibatch: inputs, one label column per sensitive head, latent noise.
pub struct Batch<'a> {
    pub x: &'a Matrix,
    pub sensitive: &'a [Vec<usize>],
    pub noise: &'a Matrix,
}

/// Which scalar to differentiate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Objective {
    L1,
    L2,
    L3,
    L4,
    Joint,
}

struct LossVars {
    l1: Var,
    l2: Var,
    l3: Var,
    l4: Var,
}

fn head_offsets(heads: &[AttributeSchema]) -> Vec<(usize, usize)> {
    let mut off = 0;
    heads
        .iter()
        .map(|h| {
            let r = (off, off + h.cardinality);
            off += h.cardinality;
            r
        })
        .collect()
}

fn one_hot(labels: &[usize], classes: usize) -> Matrix {
    let mut m = Matrix::zeros(labels.len(), classes);
    for (i, &y) in labels.iter().enumerate() {
        m[(i, y)] = 1.0;
    }
    m
}

/// Head loss summed over sensitive attributes.
fn head_loss(g: &mut Graph, logits: Var, heads: &[AttributeSchema], labels: &[Vec<usize>], kind: LossKind) -> Var {
    let mut total: Option<Var> = None;
    for ((start, end), y) in head_offsets(heads).into_iter().zip(labels) {
        let seg = g.slice_cols(logits, start, end);
        let l = match kind {
            LossKind::CrossEntropy => g.softmax_xent_mean(seg, y),
            LossKind::SquaredL2 => {
                let p = g.softmax(seg);
                let t = g.constant(one_hot(y, end - start));
                let d = g.sub(p, t);
                let sq = g.mul(d, d);
                let s = g.sum(sq);
                g.scale(s, 1.0 / y.len() as f64)
            }
        };
        total = Some(match total {
            Some(t) => g.add(t, l),
            None => l,
        });
    }
    total.expect("at least one sensitive head")
}

/// Differentiable distance correlation between two row batches.
pub fn dcorr_graph(g: &mut Graph, a: Var, b: Var) -> Var {
    let n = g.value(a).rows() as f64;
    let da = g.pairwise_dist(a);
    let ca = g.double_center(da);
    let db = g.pairwise_dist(b);
    let cb = g.double_center(db);
    let dcov = |g: &mut Graph, x: Var, y: Var| {
        let p = g.mul(x, y);
        let s = g.sum(p);
        g.scale(s, 1.0 / (n * n))
    };
    let xx = dcov(g, ca, ca);
    let yy = dcov(g, cb, cb);
    if g.scalar(xx) < DEGENERATE_DCOV || g.scalar(yy) < DEGENERATE_DCOV {
        return g.constant(Matrix::scalar(0.0));
    }
    let xy = dcov(g, ca, cb);
    let denom = g.mul(xx, yy);
    let denom = g.sqrt(denom);
    g.div(xy, denom)
}

impl DecouplerModel {
    pub fn k(&self) -> usize {
        self.config.k
    }

    pub fn m(&self) -> usize {
        self.config.m
    }

    pub fn input_width(&self) -> usize {
        self.params.encoder.spec.input
    }

    /// Builds a freshly initialized decoupler for the given inputs and heads.
    pub fn init(
        config: &DecouplerConfig,
        sample_shape: [usize; 3],
        sensitive: Vec<AttributeSchema>,
        rng: &mut RngStream,
    ) -> Result<Self> {
        config.validate()?;
        if sensitive.is_empty() {
            return Err(Error::MissingLabels("decoupler needs at least one sensitive attribute".into()));
        }
        let input: usize = sample_shape.iter().product();
        let (k, m) = (config.k, config.m);
        let classes: usize = sensitive.iter().map(|a| a.cardinality).sum();
        let act = config.activation;
        let encoder = NetworkSpec::mlp(input, &config.encoder_hidden, act, 2 * m, Head::GaussianParams);
        let decoder = NetworkSpec::mlp(m, &config.decoder_hidden, act, input, Head::Logits);
        // aligner reads z_S only, adversary reads z_NS only
        let aligner = NetworkSpec::mlp(k, &config.aligner_hidden, act, classes, Head::Logits);
        let adversary = NetworkSpec::mlp(m - k, &config.adversary_hidden, act, classes, Head::Logits);
        let params = DecouplerParams {
            encoder: Network::new(encoder, &mut rng.split(0))?,
            decoder: Network::new(decoder, &mut rng.split(1))?,
            aligner: Network::new(aligner, &mut rng.split(2))?,
            adversary: Network::new(adversary, &mut rng.split(3))?,
        };
        Ok(Self {
            config: config.clone(),
            sample_shape,
            sensitive,
            params,
        })
    }

    fn check_batch(&self, batch: &Batch<'_>) -> Result<()> {
        let n = batch.x.rows();
        if batch.x.cols() != self.input_width() {
            return Err(shape_err!("batch has {} columns, decoupler expects {}", batch.x.cols(), self.input_width()));
        }
        if batch.noise.shape() != (n, self.m()) {
            return Err(shape_err!("noise is {:?}, expected ({n}, {})", batch.noise.shape(), self.m()));
        }
        if batch.sensitive.len() != self.sensitive.len() {
            return Err(Error::MissingLabels(format!(
                "expected {} sensitive label columns, got {}",
                self.sensitive.len(),
                batch.sensitive.len()
            )));
        }
        for (col, head) in batch.sensitive.iter().zip(&self.sensitive) {
            if col.len() != n || col.iter().any(|&y| y >= head.cardinality) {
                return Err(Error::MissingLabels(format!("bad label column for {}", head.name)));
            }
        }
        Ok(())
    }

    /// Encoder mean and log-variance, each `n x m`.
    pub fn posterior(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        let h = self.params.encoder.forward(x)?;
        let m = self.m();
        Ok((h.cols_range(0, m), h.cols_range(m, 2 * m)))
    }

    /// Latents for every row; `noise = None` gives the posterior mean.
    pub fn encode_batch(&self, x: &Matrix, noise: Option<&Matrix>) -> Result<Matrix> {
        let (mu, lv) = self.posterior(x)?;
        match noise {
            None => Ok(mu),
            Some(e) => {
                if e.shape() != mu.shape() {
                    return Err(shape_err!("noise {:?} vs latent {:?}", e.shape(), mu.shape()));
                }
                let mut z = mu;
                for ((zv, l), ev) in z.data_mut().iter_mut().zip(lv.data()).zip(e.data()) {
                    *zv += (0.5 * l).exp() * ev;
                }
                Ok(z)
            }
        }
    }

    pub fn encode(&self, x: &[f64], noise: &[f64]) -> Result<LatentCode> {
        let xm = Matrix::row_vector(x);
        let em = Matrix::row_vector(noise);
        let z = self.encode_batch(&xm, Some(&em))?;
        LatentCode::new(z.into_vec(), self.k())
    }

    /// Decoded pixel intensities in `[0, 1]`.
    pub fn decode_batch(&self, z: &Matrix) -> Result<Matrix> {
        if z.cols() != self.m() {
            return Err(shape_err!("latent has {} columns, expected {}", z.cols(), self.m()));
        }
        let logits = self.params.decoder.forward(z)?;
        Ok(logits.map(|l| 1.0 / (1.0 + (-l).exp())))
    }

    fn record(&self, g: &mut Graph, vars: &[ParamVars], batch: &Batch<'_>) -> LossVars {
        let p = &self.params;
        let (k, m) = (self.k(), self.m());
        let n = batch.x.rows() as f64;
        let x = g.constant(batch.x.clone());
        let h = p.encoder.forward_graph(g, &vars[0], x);
        let mu = g.slice_cols(h, 0, m);
        let lv = g.slice_cols(h, m, 2 * m);
        let half = g.scale(lv, 0.5);
        let std = g.exp(half);
        let eps = g.constant(batch.noise.clone());
        let spread = g.mul(std, eps);
        let z = g.add(mu, spread);
        let zs = g.slice_cols(z, 0, k);
        let zns = g.slice_cols(z, k, m);

        let logits = p.decoder.forward_graph(g, &vars[1], z);
        let rec = g.bce_with_logits_sum(logits, batch.x);
        let kl = g.kl_std_normal_sum(mu, lv);
        let kl = g.scale(kl, self.config.beta);
        let l1 = g.add(rec, kl);
        let l1 = g.scale(l1, 1.0 / n);

        let a_logits = p.aligner.forward_graph(g, &vars[2], zs);
        let l2 = head_loss(g, a_logits, &self.sensitive, batch.sensitive, self.config.aligner_loss);
        let l3 = dcorr_graph(g, zs, zns);
        let v_logits = p.adversary.forward_graph(g, &vars[3], zns);
        let l4 = head_loss(g, v_logits, &self.sensitive, batch.sensitive, self.config.adversary_loss);
        LossVars { l1, l2, l3, l4 }
    }

    /// `α₁L1 + α₂L2 + α₃L3 − α₄L4`, leaving out terms whose weight is zero.
    fn joint(&self, g: &mut Graph, l: &LossVars) -> Var {
        let [a1, a2, a3, a4] = self.config.alpha;
        let mut total = g.scale(l.l1, a1);
        for (w, v) in [(a2, l.l2), (a3, l.l3), (-a4, l.l4)] {
            if w != 0.0 {
                let t = g.scale(v, w);
                total = g.add(total, t);
            }
        }
        total
    }

    /// Loss values on a batch without recording gradients.
    pub fn losses(&self, batch: &Batch<'_>) -> Result<LossValues> {
        self.check_batch(batch)?;
        let mut g = Graph::new();
        let vars = self.register(&mut g, [false; 4]);
        let l = self.record(&mut g, &vars, batch);
        let joint = self.joint(&mut g, &l);
        Ok(LossValues {
            l1: g.scalar(l.l1),
            l2: g.scalar(l.l2),
            l3: g.scalar(l.l3),
            l4: g.scalar(l.l4),
            joint: g.scalar(joint),
        })
    }

    fn register(&self, g: &mut Graph, trainable: [bool; 4]) -> Vec<ParamVars> {
        let p = &self.params;
        [&p.encoder, &p.decoder, &p.aligner, &p.adversary]
            .iter()
            .zip(trainable)
            .map(|(net, t)| ParamVars::register(g, &net.params, t))
            .collect()
    }

    /// Value of `objective` and its gradient for encoder, decoder, aligner
    /// and adversary parameters, in that order.
    pub fn gradients(&self, batch: &Batch<'_>, objective: Objective) -> Result<(f64, Vec<ParamSet>)> {
        self.gradients_for(batch, objective, [true; 4])
    }

    fn gradients_for(&self, batch: &Batch<'_>, objective: Objective, trainable: [bool; 4]) -> Result<(f64, Vec<ParamSet>)> {
        self.check_batch(batch)?;
        let mut g = Graph::new();
        let vars = self.register(&mut g, trainable);
        let l = self.record(&mut g, &vars, batch);
        let target = match objective {
            Objective::L1 => l.l1,
            Objective::L2 => l.l2,
            Objective::L3 => l.l3,
            Objective::L4 => l.l4,
            Objective::Joint => self.joint(&mut g, &l),
        };
        let grads = g.backward(target)?;
        let p = &self.params;
        let out = [&p.encoder, &p.decoder, &p.aligner, &p.adversary]
            .iter()
            .zip(&vars)
            .map(|(net, v)| v.gradient(&grads, &net.params))
            .collect();
        Ok((g.scalar(target), out))
    }

    /// Adversary loss on fixed `z_NS` and its gradient for the adversary.
    fn adversary_gradient(&self, zns: &Matrix, labels: &[Vec<usize>]) -> Result<(f64, ParamSet)> {
        let mut g = Graph::new();
        let vars = ParamVars::register(&mut g, &self.params.adversary.params, true);
        let z = g.constant(zns.clone());
        let logits = self.params.adversary.forward_graph(&mut g, &vars, z);
        let l4 = head_loss(&mut g, logits, &self.sensitive, labels, self.config.adversary_loss);
        let grads = g.backward(l4)?;
        Ok((g.scalar(l4), vars.gradient(&grads, &self.params.adversary.params)))
    }

    /// Mean `z_S` (noise-free encoding) per class of sensitive head `head`.
    pub fn class_mean_latents(&self, x: &Matrix, labels: &[usize], head: usize) -> Result<Vec<Vec<f64>>> {
        let classes = self
            .sensitive
            .get(head)
            .ok_or_else(|| Error::MissingLabels(format!("no sensitive head {head}")))?
            .cardinality;
        if labels.len() != x.rows() {
            return Err(shape_err!("{} labels for {} rows", labels.len(), x.rows()));
        }
        let z = self.encode_batch(x, None)?;
        class_means(&z.cols_range(0, self.k()), labels, classes)
    }

    pub fn encode_checkpoint(&self) -> Vec<u8> {
        let header = CheckpointHeader {
            checkpoint_version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            sample_shape: self.sample_shape,
            sensitive: self.sensitive.clone(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        let p = &self.params;
        for net in [&p.encoder, &p.decoder, &p.aligner, &p.adversary] {
            out.extend_from_slice(&codec::encode_network(net));
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn decode_checkpoint(buf: &[u8]) -> Result<Self> {
        if buf.len() < 12 || &buf[..4] != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a decoupler checkpoint".into()));
        }
        let (buf, trailer) = buf.split_at(buf.len() - 4);
        if crc32fast::hash(buf).to_le_bytes() != trailer {
            return Err(Error::Checksum("checkpoint".into()));
        }
        let len = u32::from_le_bytes(buf[4..8].try_into().unwrap()) as usize;
        let json = buf
            .get(8..8 + len)
            .ok_or_else(|| Error::Truncated("checkpoint header".into()))?;
        let header: CheckpointHeader = serde_json::from_slice(json)?;
        if header.checkpoint_version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: header.checkpoint_version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let mut pos = 8 + len;
        let mut nets = Vec::with_capacity(4);
        for _ in 0..4 {
            let (net, used) = codec::decode_network_prefix(&buf[pos..])?;
            nets.push(net);
            pos += used;
        }
        if pos != buf.len() {
            return Err(Error::Format(format!("{} trailing bytes in checkpoint", buf.len() - pos)));
        }
        let adversary = nets.pop().unwrap();
        let aligner = nets.pop().unwrap();
        let decoder = nets.pop().unwrap();
        let encoder = nets.pop().unwrap();
        let model = Self {
            config: header.config,
            sample_shape: header.sample_shape,
            sensitive: header.sensitive,
            params: DecouplerParams {
                encoder,
                decoder,
                aligner,
                adversary,
            },
        };
        model.check_layout()?;
        Ok(model)
    }

    fn check_layout(&self) -> Result<()> {
        let (k, m) = (self.k(), self.m());
        let p = &self.params;
        let input: usize = self.sample_shape.iter().product();
        let classes: usize = self.sensitive.iter().map(|a| a.cardinality).sum();
        let ok = p.encoder.spec.input == input
            && p.encoder.spec.output_width() == 2 * m
            && p.decoder.spec.input == m
            && p.decoder.spec.output_width() == input
            && p.aligner.spec.input == k
            && p.aligner.spec.output_width() == classes
            && p.adversary.spec.input == m - k
            && p.adversary.spec.output_width() == classes;
        if ok {
            Ok(())
        } else {
            Err(Error::Format("checkpoint networks do not match its header".into()))
        }
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"SDCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    checkpoint_version: u32,
    config: DecouplerConfig,
    sample_shape: [usize; 3],
    sensitive: Vec<AttributeSchema>,
}

/// Per-class row means; errors on an empty class.
pub fn class_means(zs: &Matrix, labels: &[usize], classes: usize) -> Result<Vec<Vec<f64>>> {
    let mut sums = vec![vec![0.0; zs.cols()]; classes];
    let mut counts = vec![0usize; classes];
    for (r, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::UnknownClass { class: y, classes });
        }
        counts[y] += 1;
        for (s, v) in sums[y].iter_mut().zip(zs.row(r)) {
            *s += v;
        }
    }
    for (c, (s, &n)) in sums.iter_mut().zip(&counts).enumerate() {
        if n == 0 {
            return Err(Error::EmptyClass(c));
        }
        s.iter_mut().for_each(|v| *v /= n as f64);
    }
    Ok(sums)
}

/// `z̃_S = z_S − mean_i + mean_j`; `z_NS` untouched.
pub fn interpolate_sanitize(z: &LatentCode, from: usize, to: usize, means: &[Vec<f64>]) -> Result<LatentCode> {
    for c in [from, to] {
        if c >= means.len() {
            return Err(Error::UnknownClass {
                class: c,
                classes: means.len(),
            });
        }
    }
    if means[from].len() != z.k || means[to].len() != z.k {
        return Err(shape_err!("class means have width {}, latent split is {}", means[from].len(), z.k));
    }
    let mut out = z.clone();
    for ((v, a), b) in out.z[..z.k].iter_mut().zip(&means[from]).zip(&means[to]) {
        *v = *v - a + b;
    }
    Ok(out)
}

/// Mean Bernoulli cross-entropy per sample plus β·KL, computed without the tape.
pub fn beta_vae_loss(x: &Matrix, logits: &Matrix, mu: &Matrix, logvar: &Matrix, beta: f64) -> f64 {
    let rec: f64 = logits.data().iter().zip(x.data()).map(|(&l, &t)| bce_logit(l, t)).sum();
    let kl: f64 = mu
        .data()
        .iter()
        .zip(logvar.data())
        .map(|(&m, &lv)| 0.5 * (lv.exp() + m * m - 1.0 - lv))
        .sum();
    (rec + beta * kl) / x.rows() as f64
}

fn sensitive_columns(model: &DecouplerModel, data: &LabeledDataset) -> Result<Vec<Vec<usize>>> {
    model.sensitive.iter().map(|a| data.labels_of(&a.name)).collect()
}

fn all_finite(sets: &[ParamSet]) -> bool {
    sets.iter().all(ParamSet::is_finite)
}

/// Alternating optimization of the joint objective on `aux`.
///
/// Each step first takes `adversary_steps` Adam steps on the adversary
/// (minimizing `L4` with the encoder fixed), then one Adam step on encoder,
/// decoder and aligner for the joint objective with the adversary fixed.
/// The adversary is warm-started across steps and epochs. When every
/// adversarial term is switched off the adversary is not trained.
pub fn train_decoupler(config: &DecouplerConfig, aux: &LabeledDataset, rng: &RngStream) -> Result<TrainedDecoupler> {
    config.validate()?;
    let sensitive: Vec<AttributeSchema> = aux
        .sensitive_attributes()
        .into_iter()
        .map(|i| aux.schema[i].clone())
        .collect();
    if sensitive.is_empty() {
        return Err(Error::MissingLabels("auxiliary data has no sensitive attribute".into()));
    }
    let n = aux.len();
    if n < config.batch_size {
        return Err(Error::Config(format!(
            "auxiliary data has {n} rows, fewer than one batch of {}",
            config.batch_size
        )));
    }
    let mut model = DecouplerModel::init(config, aux.sample_shape, sensitive, &mut rng.split(streams::INIT))?;
    let features = aux.features();
    let labels = sensitive_columns(&model, aux)?;
    let mut train_rng = rng.split(streams::TRAIN);

    let main_cfg = AdamConfig {
        lr: config.learning_rate,
        ..AdamConfig::default()
    };
    let adv_cfg = AdamConfig {
        lr: config.adversary_learning_rate,
        ..AdamConfig::default()
    };
    let p = &model.params;
    let mut opt_enc = AdamState::new(&p.encoder.params, main_cfg);
    let mut opt_dec = AdamState::new(&p.decoder.params, main_cfg);
    let mut opt_ali = AdamState::new(&p.aligner.params, main_cfg);
    let mut opt_adv = AdamState::new(&p.adversary.params, adv_cfg);
    let train_adversary = config.alpha[3] != 0.0;

    let mut epochs = Vec::with_capacity(config.epochs);
    let mut steps = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    let mut last_good = model.clone();
    last_good.params.quantize();

    for epoch in 0..config.epochs {
        order.shuffle(&mut train_rng);
        let mut sum = LossValues::default();
        let mut count = 0usize;
        for (step, rows) in order.chunks_exact(config.batch_size).enumerate() {
            let x = features.select_rows(rows);
            let ys: Vec<Vec<usize>> = labels.iter().map(|col| rows.iter().map(|&r| col[r]).collect()).collect();
            let noise = standard_normal_matrix(rows.len(), config.m, &mut train_rng);
            let non_finite = |what: &str, last_good: &DecouplerModel| Error::NonFinite {
                diagnostic: format!("{what} at epoch {epoch}, step {step}"),
                last_good: Some(Box::new(last_good.clone())),
            };

            if train_adversary {
                for _ in 0..config.adversary_steps {
                    let z = model.encode_batch(&x, Some(&noise))?;
                    let zns = z.cols_range(config.k, config.m);
                    let (l4, gv) = model.adversary_gradient(&zns, &ys)?;
                    if !l4.is_finite() || !gv.is_finite() {
                        return Err(non_finite("adversary loss not finite", &last_good));
                    }
                    adam_step(&mut model.params.adversary.params, &gv, &mut opt_adv)
                        .map_err(|_| non_finite("adversary parameters not finite", &last_good))?;
                }
            }

            let batch = Batch {
                x: &x,
                sensitive: &ys,
                noise: &noise,
            };
            let mut g = Graph::new();
            let vars = model.register(&mut g, [true, true, true, false]);
            let l = model.record(&mut g, &vars, &batch);
            let joint = model.joint(&mut g, &l);
            let values = LossValues {
                l1: g.scalar(l.l1),
                l2: g.scalar(l.l2),
                l3: g.scalar(l.l3),
                l4: g.scalar(l.l4),
                joint: g.scalar(joint),
            };
            if !values.joint.is_finite() {
                return Err(non_finite("joint loss not finite", &last_good));
            }
            let grads = g.backward(joint)?;
            let p = &mut model.params;
            let ge = vars[0].gradient(&grads, &p.encoder.params);
            let gd = vars[1].gradient(&grads, &p.decoder.params);
            let ga = vars[2].gradient(&grads, &p.aligner.params);
            if !all_finite(&[ge.clone(), gd.clone(), ga.clone()]) {
                return Err(non_finite("gradient not finite", &last_good));
            }
            adam_step(&mut p.encoder.params, &ge, &mut opt_enc)
                .and_then(|_| adam_step(&mut p.decoder.params, &gd, &mut opt_dec))
                .and_then(|_| adam_step(&mut p.aligner.params, &ga, &mut opt_ali))
                .map_err(|_| non_finite("parameters not finite", &last_good))?;

            sum.l1 += values.l1;
            sum.l2 += values.l2;
            sum.l3 += values.l3;
            sum.l4 += values.l4;
            sum.joint += values.joint;
            count += 1;
            steps.push(values);
        }
        let c = count.max(1) as f64;
        let mean = LossValues {
            l1: sum.l1 / c,
            l2: sum.l2 / c,
            l3: sum.l3 / c,
            l4: sum.l4 / c,
            joint: sum.joint / c,
        };
        log::info!(
            "epoch {epoch}: L1 {:.3} L2 {:.4} L3 {:.4} L4 {:.4} joint {:.3}",
            mean.l1,
            mean.l2,
            mean.l3,
            mean.l4,
            mean.joint
        );
        epochs.push(EpochLoss { epoch, losses: mean });
        last_good = model.clone();
        last_good.params.quantize();
    }
    // Checkpoints hold f32 parameters; keep the in-memory model identical.
    model.params.quantize();
    Ok(TrainedDecoupler { model, epochs, steps })
}
