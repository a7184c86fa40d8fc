use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sanitizer_core::data::{load_dataset, save_dataset, split_aux_sensitive, generate_synthetic};
use sanitizer_core::decoupler::{train_decoupler, EpochLoss};
use sanitizer_core::eval::{
    auc, evaluate_release, pareto_front, points_from_csv, points_to_csv, tradeoff_sweep, SweepData, SweepSetup,
};
use sanitizer_core::math::{streams, RngStream};
use sanitizer_core::mechanisms::{load_sanitized, sanitize_dataset, save_sanitized, SIDECAR};
use sanitizer_core::{DecouplerModel, Error as CoreError, LabeledDataset, MechanismConfig, MechanismKind};

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::plot::{render_svg, PlotInput};

pub const CHECKPOINT: &str = "decoupler.ckpt";
pub const LOSSES_CSV: &str = "losses.csv";
pub const LOSSES_HEADER: &str = "epoch,L1,L2,L3,L4,joint";
pub const REPORT_JSON: &str = "report.json";
pub const POINTS_CSV: &str = "points.csv";
pub const CHANCE_JSON: &str = "chance.json";
pub const PARETO_CSV: &str = "pareto.csv";
pub const PLOT_SVG: &str = "tradeoff.svg";
pub const AUX_DIR: &str = "aux";
pub const RELEASE_DIR: &str = "release";

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

fn majority_frequency(data: &LabeledDataset, attr: usize) -> f64 {
    let mut counts = vec![0usize; data.schema[attr].cardinality];
    for y in data.column(attr) {
        counts[y] += 1;
    }
    counts.into_iter().max().unwrap_or(0) as f64 / data.len().max(1) as f64
}

pub fn gen_data(config: Option<&Path>, out: &Path, seed: u64) -> Result<()> {
    let cfg = PipelineConfig::load(config)?;
    let data = generate_synthetic(&cfg.data, seed)?;
    save_dataset(&data, out)?;
    cfg.echo(out)?;
    let [h, w, c] = data.sample_shape;
    println!("wrote {} samples of {h}x{w}x{c} to {}", data.len(), out.display());
    for a in &data.schema {
        println!("  {} ({} classes, {:?})", a.name, a.cardinality, a.role);
    }
    Ok(())
}

pub fn split(data: &Path, config: Option<&Path>, out: &Path, seed: u64) -> Result<()> {
    let cfg = PipelineConfig::load(config)?;
    let ds = load_dataset(data)?;
    let (aux, release) = split_aux_sensitive(&ds, cfg.split.aux_fraction, seed)?;
    save_dataset(&aux, &out.join(AUX_DIR))?;
    save_dataset(&release, &out.join(RELEASE_DIR))?;
    cfg.echo(out)?;
    println!("aux {} rows, release {} rows", aux.len(), release.len());
    Ok(())
}

pub fn losses_csv(epochs: &[EpochLoss]) -> String {
    let mut s = String::from(LOSSES_HEADER);
    s.push('\n');
    for e in epochs {
        let l = &e.losses;
        s.push_str(&format!("{},{},{},{},{},{}\n", e.epoch, l.l1, l.l2, l.l3, l.l4, l.joint));
    }
    s
}

pub fn train(data: &Path, config: Option<&Path>, out: &Path, seed: u64) -> Result<()> {
    let cfg = PipelineConfig::load(config)?;
    let aux = load_dataset(data)?;
    create_dir(out)?;
    cfg.echo(out)?;
    match train_decoupler(&cfg.decoupler, &aux, &RngStream::new(seed, 0)) {
        Ok(trained) => {
            write(&out.join(CHECKPOINT), trained.model.encode_checkpoint())?;
            write(&out.join(LOSSES_CSV), losses_csv(&trained.epochs))?;
            if let Some(last) = trained.epochs.last() {
                let l = &last.losses;
                println!(
                    "trained {} epochs: L1 {:.4} L2 {:.4} L3 {:.4} L4 {:.4} joint {:.4}",
                    trained.epochs.len(),
                    l.l1,
                    l.l2,
                    l.l3,
                    l.l4,
                    l.joint
                );
            }
            Ok(())
        }
        Err(CoreError::NonFinite { diagnostic, last_good }) => {
            if let Some(model) = last_good {
                write(&out.join(CHECKPOINT), model.encode_checkpoint())?;
            }
            Err(CliError::Numeric(format!(
                "{diagnostic}; last good checkpoint kept in {}",
                out.display()
            )))
        }
        Err(e) => Err(e.into()),
    }
}

fn load_model(path: &Path) -> Result<DecouplerModel> {
    let file: PathBuf = if path.is_dir() { path.join(CHECKPOINT) } else { path.to_path_buf() };
    let bytes = fs::read(&file).map_err(|e| CliError::io(&file, e))?;
    Ok(DecouplerModel::decode_checkpoint(&bytes)?)
}

pub struct SanitizeArgs<'a> {
    pub data: &'a Path,
    pub model: Option<&'a Path>,
    pub mechanism: MechanismKind,
    pub epsilon: Option<f64>,
    pub config: Option<&'a Path>,
    pub out: &'a Path,
    pub seed: u64,
}

pub fn sanitize(args: &SanitizeArgs<'_>) -> Result<()> {
    let mut cfg = PipelineConfig::load(args.config)?;
    let kind = args.mechanism;
    cfg.mechanism.kind = kind;
    match (kind.needs_epsilon(), args.epsilon) {
        (true, None) => return Err(CliError::Mechanism(format!("{kind} requires --epsilon"))),
        (true, Some(eps)) => cfg.budget.epsilon = eps,
        (false, Some(_)) => log::warn!("{kind} ignores --epsilon"),
        (false, None) => {}
    }
    if kind.needs_epsilon() {
        cfg.budget.validate().map_err(|e| CliError::Mechanism(e.to_string()))?;
    }
    let model = match (kind.needs_decoupler(), args.model) {
        (true, None) => return Err(CliError::Mechanism(format!("{kind} requires --model"))),
        (true, Some(p)) => Some(load_model(p)?),
        (false, _) => None,
    };
    let data = load_dataset(args.data)?;
    let mech = MechanismConfig {
        kind,
        ..cfg.mechanism.clone()
    };
    let rng = RngStream::new(args.seed, streams::MECHANISM);
    let out = sanitize_dataset(&data, model.as_ref(), &mech, &cfg.budget, &rng).map_err(|e| match e {
        CoreError::Param(msg) => CliError::Mechanism(msg),
        other => other.into(),
    })?;
    save_sanitized(&out, args.out)?;
    cfg.echo(args.out)?;
    println!("sanitized {} rows with {kind} into {}", out.len(), args.out.display());
    Ok(())
}

pub fn evaluate(
    data: &Path,
    aux: &Path,
    clean_test: Option<&Path>,
    config: Option<&Path>,
    out: &Path,
    seed: u64,
) -> Result<()> {
    let cfg = PipelineConfig::load(config)?;
    let sanitized = if data.join(SIDECAR).exists() {
        Some(load_sanitized(data)?)
    } else {
        None
    };
    let release = match &sanitized {
        Some(s) => s.data.clone(),
        None => load_dataset(data)?,
    };
    let aux = load_dataset(aux)?;
    let clean = clean_test.map(load_dataset).transpose()?;
    let report = evaluate_release(
        &release,
        &aux,
        clean.as_ref(),
        sanitized.as_ref(),
        &cfg.eval,
        &RngStream::new(seed, streams::EVAL),
    )?;
    create_dir(out)?;
    let json = to_json(&report);
    write(&out.join(REPORT_JSON), &json)?;
    cfg.echo(out)?;
    print!("{json}");
    Ok(())
}

/// Chance levels used as the trade-off curve's lower-left anchor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Chance {
    pub chance_leakage: f64,
    pub chance_utility: f64,
}

impl Chance {
    /// Majority-class frequencies of the release's attacked and utility
    /// attributes.
    pub fn of_release(release: &LabeledDataset, cfg: &PipelineConfig) -> Result<Self> {
        let s = release.attribute_index(&cfg.eval.sensitive_name(release)?)?;
        let u = release.attribute_index(&cfg.eval.utility_name(release)?)?;
        Ok(Self {
            chance_leakage: majority_frequency(release, s),
            chance_utility: majority_frequency(release, u),
        })
    }
}

pub fn sweep(aux: &Path, release: &Path, config: Option<&Path>, out: &Path, jobs: usize, seed: u64) -> Result<()> {
    let cfg = PipelineConfig::load(config)?;
    let aux = load_dataset(aux)?;
    let release = load_dataset(release)?;
    let setup = SweepSetup {
        decoupler: cfg.decoupler.clone(),
        mechanism: cfg.mechanism.clone(),
        budget: cfg.budget.clone(),
        eval: cfg.eval.clone(),
        seed,
    };
    let data = SweepData {
        aux: &aux,
        release: &release,
    };
    let results = tradeoff_sweep(&cfg.sweep_grid, &setup, &data, jobs)?;
    let mut points = Vec::with_capacity(results.len());
    let mut failed = 0usize;
    for r in results {
        match r {
            Ok(p) => points.push(p),
            Err(e) => {
                failed += 1;
                log::error!("sweep point {} failed: {}", e.config_id, e.error);
            }
        }
    }
    create_dir(out)?;
    write(&out.join(POINTS_CSV), points_to_csv(&points))?;
    write(&out.join(CHANCE_JSON), to_json(&Chance::of_release(&release, &cfg)?))?;
    cfg.echo(out)?;
    println!("{} points written, {failed} failed", points.len());
    Ok(())
}

pub fn plot(
    points_path: &Path,
    out: &Path,
    chance_leakage: Option<f64>,
    chance_utility: Option<f64>,
    config: Option<&Path>,
) -> Result<()> {
    let cfg = PipelineConfig::load(config)?;
    let text = fs::read_to_string(points_path).map_err(|e| CliError::io(points_path, e))?;
    let points = points_from_csv(&text)?;
    let recorded = || -> Result<Chance> {
        let path = points_path.with_file_name(CHANCE_JSON);
        let raw = fs::read_to_string(&path).map_err(|_| {
            CliError::Config(format!(
                "no {} next to the points; pass --chance-leakage and --chance-utility",
                CHANCE_JSON
            ))
        })?;
        serde_json::from_str(&raw).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    };
    let chance = match (chance_leakage, chance_utility) {
        (Some(l), Some(u)) => Chance {
            chance_leakage: l,
            chance_utility: u,
        },
        (l, u) => {
            let r = recorded()?;
            Chance {
                chance_leakage: l.unwrap_or(r.chance_leakage),
                chance_utility: u.unwrap_or(r.chance_utility),
            }
        }
    };
    let front = pareto_front(&points);
    let pairs: Vec<(f64, f64)> = front.iter().map(|p| (p.leakage_acc, p.utility_acc)).collect();
    let area = auc(&pairs, chance.chance_leakage, chance.chance_utility)?;
    create_dir(out)?;
    write(&out.join(PARETO_CSV), points_to_csv(&front))?;
    let svg = render_svg(&PlotInput {
        points: &points,
        front: &front,
        chance_leakage: chance.chance_leakage,
        chance_utility: chance.chance_utility,
        auc: area,
    });
    write(&out.join(PLOT_SVG), svg)?;
    cfg.echo(out)?;
    println!("auc {area}");
    Ok(())
}
