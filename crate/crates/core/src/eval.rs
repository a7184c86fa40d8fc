//! Evaluation protocol: adaptive attacker and utility classifiers, leakage,
//! pareto fronts with normalized area under the curve, classification
//! accuracy scores, and parallel trade-off sweeps.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{adam_step, AdamConfig, AdamState, Activation, Graph, Head, Network, NetworkSpec, ParamVars};
use crate::data::LabeledDataset;
use crate::decoupler::{train_decoupler, DecouplerConfig, DecouplerModel};
use crate::error::{shape_err, Error, Result};
use crate::math::{streams, Matrix, RngStream};
use crate::mechanisms::{sanitize_dataset, MechanismConfig, MechanismKind, PrivacyBudget, SanitizedDataset};

pub const REPORT_VERSION: u32 = 1;
pub const POINTS_HEADER: &str =
    "config_id,seed,epsilon,alpha1,alpha2,alpha3,alpha4,beta,mechanism,leakage_acc,prior_acc,leakage_delta,utility_acc";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSpec {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        Self {
            hidden: vec![64],
            activation: Activation::Relu,
            epochs: 10,
            batch_size: 64,
            learning_rate: 1e-3,
        }
    }
}

impl ClassifierSpec {
    pub fn network(&self, input: usize, classes: usize) -> NetworkSpec {
        NetworkSpec::mlp(input, &self.hidden, self.activation, classes, Head::Logits)
    }

    pub fn with_epochs(&self, epochs: usize) -> Self {
        Self {
            epochs,
            ..self.clone()
        }
    }
}

/// Trains a softmax classifier with minibatch Adam on cross-entropy.
///
/// `init` warm-starts from an existing network of the same architecture.
pub fn train_classifier(
    x: &Matrix,
    labels: &[usize],
    classes: usize,
    spec: &ClassifierSpec,
    init: Option<&Network>,
    rng: &RngStream,
) -> Result<Network> {
    if labels.len() != x.rows() {
        return Err(shape_err!("{} labels for {} rows", labels.len(), x.rows()));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::UnknownClass { class: bad, classes });
    }
    if spec.batch_size == 0 {
        return Err(Error::Config("classifier batch_size must be positive".into()));
    }
    let net_spec = spec.network(x.cols(), classes);
    let mut net = match init {
        Some(n) if n.spec == net_spec => n.clone(),
        Some(_) => return Err(shape_err!("warm-start network does not match the classifier architecture")),
        None => Network::new(net_spec, &mut rng.split(0))?,
    };
    let mut train_rng = rng.split(1);
    let mut opt = AdamState::new(
        &net.params,
        AdamConfig {
            lr: spec.learning_rate,
            ..AdamConfig::default()
        },
    );
    let mut order: Vec<usize> = (0..x.rows()).collect();
    for _ in 0..spec.epochs {
        order.shuffle(&mut train_rng);
        for rows in order.chunks(spec.batch_size) {
            let xb = x.select_rows(rows);
            let yb: Vec<usize> = rows.iter().map(|&r| labels[r]).collect();
            let mut g = Graph::new();
            let vars = ParamVars::register(&mut g, &net.params, true);
            let xv = g.constant(xb);
            let logits = net.forward_graph(&mut g, &vars, xv);
            let loss = g.softmax_xent_mean(logits, &yb);
            if !g.scalar(loss).is_finite() {
                return Err(Error::NonFinite {
                    diagnostic: "classifier loss not finite".into(),
                    last_good: None,
                });
            }
            let grads = g.backward(loss)?;
            let grad = vars.gradient(&grads, &net.params);
            adam_step(&mut net.params, &grad, &mut opt)?;
        }
    }
    Ok(net)
}

pub fn predict(net: &Network, x: &Matrix) -> Result<Vec<usize>> {
    let logits = net.forward(x)?;
    Ok((0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            // first maximum wins on ties
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect())
}

pub fn accuracy(net: &Network, x: &Matrix, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Param("accuracy of an empty test set".into()));
    }
    let pred = predict(net, x)?;
    if pred.len() != labels.len() {
        return Err(shape_err!("{} predictions for {} labels", pred.len(), labels.len()));
    }
    Ok(pred.iter().zip(labels).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64)
}

/// Accuracy on `test` of always predicting the majority class of `train`.
pub fn prior_accuracy(train: &[usize], test: &[usize], classes: usize) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Param("prior accuracy of an empty test set".into()));
    }
    let mut counts = vec![0usize; classes];
    for &y in train {
        *counts.get_mut(y).ok_or(Error::UnknownClass { class: y, classes })? += 1;
    }
    let majority = counts
        .iter()
        .enumerate()
        .fold((0, 0), |best, (c, &n)| if n > best.1 { (c, n) } else { best })
        .0;
    Ok(test.iter().filter(|&&y| y == majority).count() as f64 / test.len() as f64)
}

/// Attacker accuracy minus the uninformed prior accuracy.
pub fn leakage(attacker_acc: f64, prior_acc: f64) -> Result<f64> {
    for v in [attacker_acc, prior_acc] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Param(format!("accuracy {v} outside [0, 1]")));
        }
    }
    Ok(attacker_acc - prior_acc)
}

/// Indices of the pareto-optimal `(leakage, utility)` points, ordered by
/// ascending leakage. Lower leakage and higher utility are better; among
/// points of equal leakage only the first max-utility one survives.
pub fn pareto_indices(points: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (points[a], points[b]);
        pa.0.total_cmp(&pb.0).then(pb.1.total_cmp(&pa.1)).then(a.cmp(&b))
    });
    let mut front = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for i in order {
        if points[i].1 > best {
            best = points[i].1;
            front.push(i);
        }
    }
    front
}

pub fn pareto_front(points: &[TradeoffPoint]) -> Vec<TradeoffPoint> {
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.leakage_acc, p.utility_acc)).collect();
    pareto_indices(&pairs).into_iter().map(|i| points[i].clone()).collect()
}

/// Normalized area under a pareto curve of `(leakage, utility)` points.
///
/// The curve starts at `(chance_leakage, chance_utility)` and ends at
/// `(1, max utility)`; leakage is clamped into `[chance_leakage, 1]` and
/// utility into `[chance_utility, 1]` (both anchors are trivially
/// achievable), the trapezoid integral is divided by `1 − chance_leakage`.
pub fn auc(front: &[(f64, f64)], chance_leakage: f64, chance_utility: f64) -> Result<f64> {
    if !(chance_leakage < 1.0) {
        return Err(Error::Param(format!("chance leakage must be below 1, got {chance_leakage}")));
    }
    let mut pts: Vec<(f64, f64)> = front.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let floor = chance_utility.min(1.0);
    let lift = |y: f64| y.clamp(floor, 1.0_f64.max(floor));
    let max_util = pts.iter().map(|p| lift(p.1)).fold(floor, f64::max);
    let mut curve = Vec::with_capacity(pts.len() + 2);
    curve.push((chance_leakage, chance_utility));
    curve.extend(pts.iter().map(|&(x, y)| (x.clamp(chance_leakage, 1.0), lift(y))));
    curve.push((1.0, max_util));
    let area: f64 = curve
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) * 0.5)
        .sum();
    Ok(area / (1.0 - chance_leakage))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub attacker: ClassifierSpec,
    pub utility: ClassifierSpec,
    /// Epochs of attacker pretraining on clean auxiliary data.
    pub pretrain_epochs: usize,
    /// Epochs of attacker finetuning on sanitized data.
    pub finetune_epochs: usize,
    /// Fraction of sanitized rows held out for testing.
    pub test_fraction: f64,
    /// Sensitive attribute attacked; `None` means the first sensitive one.
    pub sensitive_attribute: Option<String>,
    /// Utility attribute; `None` means the first non-sensitive one.
    pub utility_attribute: Option<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            attacker: ClassifierSpec::default(),
            utility: ClassifierSpec::default(),
            pretrain_epochs: 10,
            finetune_epochs: 10,
            test_fraction: 0.2,
            sensitive_attribute: None,
            utility_attribute: None,
        }
    }
}

impl EvalConfig {
    pub fn sensitive_name(&self, data: &LabeledDataset) -> Result<String> {
        match &self.sensitive_attribute {
            Some(n) => Ok(data.attribute(n)?.name.clone()),
            None => Ok(data.schema[data.first_sensitive()?].name.clone()),
        }
    }

    pub fn utility_name(&self, data: &LabeledDataset) -> Result<String> {
        match &self.utility_attribute {
            Some(n) => Ok(data.attribute(n)?.name.clone()),
            None => Ok(data.schema[data.first_non_sensitive()?].name.clone()),
        }
    }
}

fn check_schema(a: &LabeledDataset, b: &LabeledDataset) -> Result<()> {
    if a.sample_shape != b.sample_shape || a.schema != b.schema {
        return Err(Error::Config(format!(
            "dataset schemas differ: {:?} {:?} vs {:?} {:?}",
            a.sample_shape, a.schema, b.sample_shape, b.schema
        )));
    }
    Ok(())
}

/// Trains on `train` and reports accuracy on `test` for one attribute.
pub fn train_and_score(
    train: &LabeledDataset,
    test: &LabeledDataset,
    attribute: &str,
    spec: &ClassifierSpec,
    init: Option<&Network>,
    rng: &RngStream,
) -> Result<f64> {
    check_schema(train, test)?;
    let classes = train.attribute(attribute)?.cardinality;
    let net = train_classifier(&train.features(), &train.labels_of(attribute)?, classes, spec, init, rng)?;
    accuracy(&net, &test.features(), &test.labels_of(attribute)?)
}

/// Attacker pretrained on clean auxiliary data (the adversary's side
/// information), used to warm-start finetuning on sanitized releases.
pub fn pretrain_attacker(aux: &LabeledDataset, attribute: &str, config: &EvalConfig, rng: &RngStream) -> Result<Network> {
    let classes = aux.attribute(attribute)?.cardinality;
    train_classifier(
        &aux.features(),
        &aux.labels_of(attribute)?,
        classes,
        &config.attacker.with_epochs(config.pretrain_epochs),
        None,
        rng,
    )
}

/// Classification accuracy score: train on sanitized samples with their
/// original utility labels, evaluate on clean samples.
pub fn cas_evaluate(
    sanitized_train: &LabeledDataset,
    clean_test: &LabeledDataset,
    utility_attribute: &str,
    spec: &ClassifierSpec,
    rng: &RngStream,
) -> Result<f64> {
    train_and_score(sanitized_train, clean_test, utility_attribute, spec, None, rng)
}

/// Sensitive-distribution learning on a release with synthetic labels.
///
/// Returns `(receiver_acc, attacker_acc)`: the receiver trains on
/// `(X̃, Ỹ_S)` and is scored on clean `(X, Y_S)`; the attacker trains on
/// `(X̃, Y_S)` and is scored on held-out `(X̃, Y_S)`.
pub fn sensitive_cas_evaluate(
    sanitized: &SanitizedDataset,
    clean_test: &LabeledDataset,
    attacker_init: Option<&Network>,
    config: &EvalConfig,
    rng: &RngStream,
) -> Result<(f64, f64)> {
    if !sanitized.mechanism.emits_labels() || sanitized.synthetic_labels.is_none() {
        return Err(Error::UnsupportedMechanism(format!(
            "{} censors the sensitive attribute and emits no synthetic labels",
            sanitized.mechanism
        )));
    }
    let attr = config.sensitive_name(&sanitized.data)?;
    let relabeled = sanitized.with_synthetic_labels()?;
    let receiver = train_and_score(&relabeled, clean_test, &attr, &config.utility, None, &rng.split(0))?;
    let (train, test) = holdout(&sanitized.data, config.test_fraction, &rng.split(1))?;
    let attacker = train_and_score(
        &train,
        &test,
        &attr,
        &config.attacker.with_epochs(config.finetune_epochs),
        attacker_init,
        &rng.split(2),
    )?;
    Ok((receiver, attacker))
}

/// Shuffled train/test split with `⌈fraction·n⌉` test rows.
pub fn holdout(data: &LabeledDataset, test_fraction: f64, rng: &RngStream) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!("test_fraction must be in (0, 1), got {test_fraction}")));
    }
    let n = data.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng.clone());
    let n_test = ((test_fraction * n as f64).ceil() as usize).clamp(1, n.saturating_sub(1).max(1));
    let test = idx.split_off(n - n_test);
    Ok((data.select(&idx), data.select(&test)))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub report_version: u32,
    pub mechanism: Option<MechanismKind>,
    pub leakage_acc: f64,
    pub prior_acc: f64,
    pub leakage_delta: f64,
    pub utility_acc: f64,
    pub utility_prior_acc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cas_acc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e5_receiver_acc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e5_attacker_acc: Option<f64>,
}

/// Leakage and utility of a release.
///
/// Sanitized rows are split into train/test. The attacker is pretrained on
/// clean `aux`, finetuned on the sanitized train rows and scored on the
/// sanitized test rows; the utility model is trained and scored the same
/// way without warm start. With `clean_test` the report also carries CAS
/// and, for releases with synthetic labels, the E5 accuracies.
pub fn evaluate_release(
    release: &LabeledDataset,
    aux: &LabeledDataset,
    clean_test: Option<&LabeledDataset>,
    sanitized: Option<&SanitizedDataset>,
    config: &EvalConfig,
    rng: &RngStream,
) -> Result<Report> {
    check_schema(release, aux)?;
    let s_attr = config.sensitive_name(release)?;
    let u_attr = config.utility_name(release)?;
    let (train, test) = holdout(release, config.test_fraction, &rng.split(0))?;
    let init = pretrain_attacker(aux, &s_attr, config, &rng.split(1))?;
    let finetune = config.attacker.with_epochs(config.finetune_epochs);
    let leakage_acc = train_and_score(&train, &test, &s_attr, &finetune, Some(&init), &rng.split(2))?;
    let s_card = release.attribute(&s_attr)?.cardinality;
    let prior_acc = prior_accuracy(&train.labels_of(&s_attr)?, &test.labels_of(&s_attr)?, s_card)?;
    let utility_acc = train_and_score(&train, &test, &u_attr, &config.utility, None, &rng.split(3))?;
    let u_card = release.attribute(&u_attr)?.cardinality;
    let utility_prior_acc = prior_accuracy(&train.labels_of(&u_attr)?, &test.labels_of(&u_attr)?, u_card)?;
    let mut report = Report {
        report_version: REPORT_VERSION,
        mechanism: sanitized.map(|s| s.mechanism),
        leakage_acc,
        prior_acc,
        leakage_delta: leakage(leakage_acc, prior_acc)?,
        utility_acc,
        utility_prior_acc,
        ..Report::default()
    };
    if let Some(clean) = clean_test {
        check_schema(release, clean)?;
        report.cas_acc = Some(cas_evaluate(release, clean, &u_attr, &config.utility, &rng.split(4))?);
        if let Some(s) = sanitized.filter(|s| s.mechanism.emits_labels()) {
            let (r, a) = sensitive_cas_evaluate(s, clean, Some(&init), config, &rng.split(5))?;
            report.e5_receiver_acc = Some(r);
            report.e5_attacker_acc = Some(a);
        }
    }
    Ok(report)
}

/// One entry of a sweep grid: overrides applied on top of the base configs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridPoint {
    pub alpha: Option<[f64; 4]>,
    pub beta: Option<f64>,
    pub epsilon: Option<f64>,
    pub mechanism: Option<MechanismKind>,
    pub sigma: Option<f64>,
    pub projection_dim: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSetup {
    pub decoupler: DecouplerConfig,
    pub mechanism: MechanismConfig,
    pub budget: PrivacyBudget,
    pub eval: EvalConfig,
    pub seed: u64,
}

impl SweepSetup {
    pub fn resolve(&self, point: &GridPoint) -> (DecouplerConfig, MechanismConfig, PrivacyBudget) {
        let mut dec = self.decoupler.clone();
        if let Some(a) = point.alpha {
            dec.alpha = a;
        }
        if let Some(b) = point.beta {
            dec.beta = b;
        }
        let mut mech = self.mechanism.clone();
        if let Some(m) = point.mechanism {
            mech.kind = m;
        }
        if let Some(s) = point.sigma {
            mech.sigma = s;
        }
        if point.projection_dim.is_some() {
            mech.projection_dim = point.projection_dim;
        }
        let mut budget = self.budget.clone();
        if let Some(e) = point.epsilon {
            budget.epsilon = e;
        }
        (dec, mech, budget)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub config_id: usize,
    pub seed: u64,
    pub epsilon: Option<f64>,
    pub alpha: [f64; 4],
    pub beta: f64,
    pub mechanism: MechanismKind,
    pub leakage_acc: f64,
    pub prior_acc: f64,
    pub leakage_delta: f64,
    pub utility_acc: f64,
}

impl TradeoffPoint {
    pub fn csv_row(&self) -> String {
        let eps = self.epsilon.map(|e| e.to_string()).unwrap_or_default();
        let [a1, a2, a3, a4] = self.alpha;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.config_id,
            self.seed,
            eps,
            a1,
            a2,
            a3,
            a4,
            self.beta,
            self.mechanism,
            self.leakage_acc,
            self.prior_acc,
            self.leakage_delta,
            self.utility_acc
        )
    }

    pub fn parse_csv_row(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 13 {
            return Err(Error::Format(format!("expected 13 CSV fields, got {}: {line:?}", f.len())));
        }
        let num = |i: usize| -> Result<f64> {
            f[i].parse::<f64>()
                .map_err(|_| Error::Format(format!("field {i} ({:?}) is not a number", f[i])))
        };
        let int = |i: usize| -> Result<u64> {
            f[i].parse::<u64>()
                .map_err(|_| Error::Format(format!("field {i} ({:?}) is not an integer", f[i])))
        };
        Ok(Self {
            config_id: int(0)? as usize,
            seed: int(1)?,
            epsilon: if f[2].is_empty() { None } else { Some(num(2)?) },
            alpha: [num(3)?, num(4)?, num(5)?, num(6)?],
            beta: num(7)?,
            mechanism: f[8].parse()?,
            leakage_acc: num(9)?,
            prior_acc: num(10)?,
            leakage_delta: num(11)?,
            utility_acc: num(12)?,
        })
    }
}

pub fn points_to_csv(points: &[TradeoffPoint]) -> String {
    let mut out = String::from(POINTS_HEADER);
    out.push('\n');
    for p in points {
        let _ = writeln!(out, "{}", p.csv_row());
    }
    out
}

pub fn points_from_csv(text: &str) -> Result<Vec<TradeoffPoint>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == POINTS_HEADER => {}
        other => return Err(Error::Format(format!("unexpected CSV header {other:?}"))),
    }
    lines.filter(|l| !l.trim().is_empty()).map(TradeoffPoint::parse_csv_row).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffCurve {
    pub points: Vec<TradeoffPoint>,
    pub pareto: Vec<TradeoffPoint>,
    pub chance_leakage: f64,
    pub chance_utility: f64,
    pub auc: f64,
}

pub fn tradeoff_curve(points: Vec<TradeoffPoint>, chance_leakage: f64, chance_utility: f64) -> Result<TradeoffCurve> {
    let pareto = pareto_front(&points);
    let pairs: Vec<(f64, f64)> = pareto.iter().map(|p| (p.leakage_acc, p.utility_acc)).collect();
    let auc = auc(&pairs, chance_leakage, chance_utility)?;
    Ok(TradeoffCurve {
        points,
        pareto,
        chance_leakage,
        chance_utility,
        auc,
    })
}

/// A failed sweep point.
#[derive(Debug)]
pub struct PointError {
    pub config_id: usize,
    pub error: Error,
}

/// Data shared by every sweep point.
pub struct SweepData<'a> {
    /// Trains decouplers and pretrains attackers.
    pub aux: &'a LabeledDataset,
    /// Sanitized and evaluated.
    pub release: &'a LabeledDataset,
}

/// Runs every grid point on up to `jobs` threads.
///
/// Each point derives all randomness from `setup.seed`, so points that
/// share a decoupler configuration train the identical decoupler (trained
/// once and reused). Results come back in grid order; a failing point is
/// reported with its id and does not stop the others.
pub fn tradeoff_sweep(
    grid: &[GridPoint],
    setup: &SweepSetup,
    data: &SweepData<'_>,
    jobs: usize,
) -> Result<Vec<std::result::Result<TradeoffPoint, PointError>>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let resolved: Vec<_> = grid.iter().map(|g| setup.resolve(g)).collect();
    let root = RngStream::new(setup.seed, streams::SWEEP);

    // one decoupler per distinct configuration, keyed by its JSON form
    let mut keys: Vec<String> = Vec::new();
    let mut key_of = Vec::with_capacity(grid.len());
    let mut needed: Vec<DecouplerConfig> = Vec::new();
    for (dec, mech, _) in &resolved {
        if !mech.kind.needs_decoupler() {
            key_of.push(None);
            continue;
        }
        let key = serde_json::to_string(dec)?;
        let idx = keys.iter().position(|k| *k == key).unwrap_or_else(|| {
            keys.push(key);
            needed.push(dec.clone());
            keys.len() - 1
        });
        key_of.push(Some(idx));
    }
    let models: Vec<std::result::Result<DecouplerModel, String>> = pool.install(|| {
        needed
            .par_iter()
            .map(|cfg| {
                train_decoupler(cfg, data.aux, &root)
                    .map(|t| t.model)
                    .map_err(|e| e.to_string())
            })
            .collect()
    });
    let cache: HashMap<usize, &std::result::Result<DecouplerModel, String>> = models.iter().enumerate().collect();

    let out = pool.install(|| {
        resolved
            .par_iter()
            .enumerate()
            .map(|(id, (dec, mech, budget))| {
                let model = match key_of[id] {
                    Some(k) => match cache[&k] {
                        Ok(m) => Some(m),
                        Err(msg) => {
                            return Err(PointError {
                                config_id: id,
                                error: Error::Config(format!("decoupler training failed: {msg}")),
                            })
                        }
                    },
                    None => None,
                };
                run_point(id, dec, mech, budget, model, setup, data, &root).map_err(|error| PointError { config_id: id, error })
            })
            .collect()
    });
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn run_point(
    id: usize,
    dec: &DecouplerConfig,
    mech: &MechanismConfig,
    budget: &PrivacyBudget,
    model: Option<&DecouplerModel>,
    setup: &SweepSetup,
    data: &SweepData<'_>,
    root: &RngStream,
) -> Result<TradeoffPoint> {
    let sanitized = sanitize_dataset(data.release, model, mech, budget, &root.split(streams::MECHANISM))?;
    let report = evaluate_release(&sanitized.data, data.aux, None, Some(&sanitized), &setup.eval, &root.split(streams::EVAL))?;
    log::info!(
        "point {id}: {} leakage {:.4} utility {:.4}",
        mech.kind,
        report.leakage_acc,
        report.utility_acc
    );
    Ok(TradeoffPoint {
        config_id: id,
        seed: setup.seed,
        epsilon: mech.kind.needs_epsilon().then_some(budget.epsilon),
        alpha: dec.alpha,
        beta: dec.beta,
        mechanism: mech.kind,
        leakage_acc: report.leakage_acc,
        prior_acc: report.prior_acc,
        leakage_delta: report.leakage_delta,
        utility_acc: report.utility_acc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leakage_cases() {
        assert_eq!(leakage(0.44, 0.44).unwrap(), 0.0);
        assert_eq!(leakage(1.0, 0.5).unwrap(), 0.5);
        assert!((leakage(0.40, 0.44).unwrap() + 0.04).abs() < 1e-15);
        assert!(leakage(1.2, 0.5).is_err());
    }

    #[test]
    fn pareto_cases() {
        assert!(pareto_indices(&[]).is_empty());
        assert_eq!(pareto_indices(&[(0.3, 0.2)]), vec![0]);
        assert_eq!(pareto_indices(&[(0.5, 0.9), (0.4, 0.95)]), vec![1]);
        // equal leakage keeps the max-utility point
        assert_eq!(pareto_indices(&[(0.4, 0.7), (0.4, 0.9), (0.6, 0.95)]), vec![1, 2]);
    }

    #[test]
    fn auc_cases() {
        assert!((auc(&[(0.25, 1.0)], 0.25, 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((auc(&[], 0.5, 0.5).unwrap() - 0.5).abs() < 1e-12);
        assert!(auc(&[], 1.0, 0.5).is_err());
    }

    #[test]
    fn prior_accuracy_uses_train_majority() {
        let acc = prior_accuracy(&[0, 1, 1, 2], &[1, 1, 0, 2], 3).unwrap();
        assert_eq!(acc, 0.5);
    }

    #[test]
    fn csv_round_trip() {
        let p = TradeoffPoint {
            config_id: 3,
            seed: 7,
            epsilon: Some(0.5),
            alpha: [1.0, 1.0, 100.0, 1.0],
            beta: 5.0,
            mechanism: MechanismKind::DpSample,
            leakage_acc: 0.3125,
            prior_acc: 0.25,
            leakage_delta: 0.0625,
            utility_acc: 0.875,
        };
        let q = TradeoffPoint {
            epsilon: None,
            mechanism: MechanismKind::Suppress,
            ..p.clone()
        };
        let csv = points_to_csv(&[p.clone(), q.clone()]);
        assert_eq!(points_from_csv(&csv).unwrap(), vec![p, q]);
        assert_eq!(points_to_csv(&[]), format!("{POINTS_HEADER}\n"));
    }

    #[test]
    fn constant_labels_learned() {
        let mut rng = RngStream::new(0, 0);
        let x = crate::math::standard_normal_matrix(40, 3, &mut rng);
        let y = vec![1; 40];
        let spec = ClassifierSpec::default().with_epochs(100);
        let net = train_classifier(&x, &y, 2, &spec, None, &RngStream::new(1, 0)).unwrap();
        assert_eq!(accuracy(&net, &x, &y).unwrap(), 1.0);
        let again = train_classifier(&x, &y, 2, &spec, None, &RngStream::new(1, 0)).unwrap();
        assert_eq!(again, net);
    }
}
