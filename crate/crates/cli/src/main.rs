//! Command-line front end: dataset generation, training, scoring, threshold
//! calibration, AUROC evaluation, full experiment sweeps, and report
//! rendering. Errors print as one JSON line on stderr with exit code 1.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, Subcommand};

use hierfault::classifier::{argmax, train, ClassifierModel, LabelMode, TrainConfig};
use hierfault::config::{derive_seed, ExperimentConfig};
use hierfault::dataset::{generate_synthetic, load_csv, save_csv, stratified_split};
use hierfault::error::{Error, Result};
use hierfault::evaluation::{auroc, calibrate_threshold};
use hierfault::harness::Harness;
use hierfault::report::render_report;
use hierfault::scores::{hier_score, msp_score, odin_score, FitLabelMode, GaussianBank, Method, Variant};
use hierfault::taxonomy::SoftLabelMatrix;

const SEED_ENV: &str = "HIERFAULT_SEED";

#[derive(Parser)]
#[command(
    name = "hierfault",
    about = "Hierarchy-aware novel fault detection experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic hierarchical dataset CSV.
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Master seed override (beats config and environment).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a classifier on a dataset CSV and save a checkpoint.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// flat or hier.
        #[arg(long, default_value = "flat")]
        variant: String,
        /// Soft-label strength for the hier variant.
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score every sample of a dataset CSV with one detector.
    Score {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// msp, odin, or dmd.
        #[arg(long)]
        method: String,
        #[arg(long, default_value = "flat")]
        variant: String,
        #[arg(long)]
        beta: Option<f64>,
        /// Training dataset for fitting the DMD Gaussian bank.
        #[arg(long)]
        fit_data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Calibrate detection thresholds from a score dump.
    Calibrate {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Compute AUROC per detector group from a score dump.
    Evaluate {
        #[arg(long)]
        scores: PathBuf,
    },
    /// Run the full leave-one-class-out sweep.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (defaults to the config output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render box-plot data and SVG pages from sweep results.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("{}", serde_json::json!({ "error": e.to_string() }));
        std::process::exit(1);
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

/// Master seed precedence: --seed flag, then HIERFAULT_SEED, then config.
fn resolve_seed(flag: Option<u64>, config: &ExperimentConfig) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Ok(text) = std::env::var(SEED_ENV) {
        return text
            .parse()
            .map_err(|_| Error::Config(format!("{} must be an integer, got '{}'", SEED_ENV, text)));
    }
    Ok(config.master_seed)
}

fn parse_variant(s: &str) -> Result<Variant> {
    Variant::from_str(s)
}

fn label_mode(variant: Variant, beta: Option<f64>) -> Result<LabelMode> {
    match variant {
        Variant::Flat => Ok(LabelMode::Flat),
        Variant::Hier => {
            let beta =
                beta.ok_or_else(|| Error::Config("hier variant requires --beta".into()))?;
            Ok(LabelMode::Hierarchical { beta })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { config, out, seed } => {
            let config = load_config(&config)?;
            let master = resolve_seed(seed, &config)?;
            let tree = config.resolve_taxonomy()?;
            let spec = config.resolve_generator(&tree, master);
            let ds = generate_synthetic(&tree, &spec)?;
            save_csv(&ds, &out)?;
            println!(
                "{}",
                serde_json::json!({
                    "written": out,
                    "samples": ds.num_samples(),
                    "classes": ds.num_classes(),
                    "feature_dim": ds.feature_dim(),
                })
            );
            Ok(())
        }
        Command::Train {
            config,
            data,
            out,
            variant,
            beta,
            lr,
            epochs,
            seed,
        } => {
            let config = load_config(&config)?;
            let master = resolve_seed(seed, &config)?;
            let variant = parse_variant(&variant)?;
            let tree = config.resolve_taxonomy()?;
            let ds = load_csv(&data, &tree)?;
            let split_seed = derive_seed(master, "train-cmd|split");
            let (train_ds, val_ds, _) = stratified_split(
                &ds,
                (config.split[0], config.split[1], config.split[2]),
                split_seed,
            )?;
            let train_config = TrainConfig {
                learning_rate: lr.unwrap_or(0.01),
                epochs: epochs.unwrap_or(config.train.epochs),
                batch_size: config.train.batch_size,
                seed: derive_seed(master, "train-cmd|train"),
                label_mode: label_mode(variant, beta)?,
                weight_decay: config.train.weight_decay,
                momentum: config.train.momentum,
            };
            let arch = config.arch_for(ds.feature_dim(), ds.num_classes());
            let model = ClassifierModel::new(&arch, train_config.seed);
            let (model, history) = train(model, &train_ds, &val_ds, &tree, &train_config)?;
            model.save(&out)?;
            println!(
                "{}",
                serde_json::json!({
                    "written": out,
                    "best_epoch": history.best_epoch,
                    "best_val_loss": history.val_loss[history.best_epoch],
                    "final_train_loss": history.train_loss.last(),
                })
            );
            Ok(())
        }
        Command::Score {
            config,
            model,
            data,
            method,
            variant,
            beta,
            fit_data,
            out,
        } => {
            let config = load_config(&config)?;
            let method = Method::from_str(&method)?;
            let variant = parse_variant(&variant)?;
            let tree = config.resolve_taxonomy()?;
            let model = ClassifierModel::load(&model)?;
            if model.num_classes() != tree.num_leaves() {
                return Err(Error::Config(format!(
                    "model has {} classes but the taxonomy has {} leaves",
                    model.num_classes(),
                    tree.num_leaves()
                )));
            }
            let ds = load_csv(&data, &tree)?;
            let soft = match (variant, beta) {
                (Variant::Hier, Some(beta)) => Some(SoftLabelMatrix::build(&tree, beta)?),
                (Variant::Hier, None) => {
                    return Err(Error::Config("hier variant requires --beta".into()))
                }
                (Variant::Flat, _) => None,
            };
            let bank = if method == Method::Dmd {
                let fit_path = fit_data.ok_or_else(|| {
                    Error::Config("dmd scoring requires --fit-data".into())
                })?;
                let fit_ds = load_csv(&fit_path, &tree)?;
                let features = model.penultimate_batch(&fit_ds.features().view())?;
                Some(GaussianBank::fit(
                    &features.view(),
                    fit_ds.labels(),
                    fit_ds.num_classes(),
                    FitLabelMode::True,
                )?)
            } else {
                None
            };

            let mut w = csv::Writer::from_path(&out)?;
            w.write_record([
                "sample_id",
                "method",
                "variant",
                "beta",
                "score",
                "predicted_leaf",
                "is_novel",
            ])?;
            for r in 0..ds.num_samples() {
                let x = ds.features().row(r);
                let fwd = model.forward(&x)?;
                let predicted = argmax(&fwd.probs.view());
                let score = match method {
                    Method::Msp => match &soft {
                        None => msp_score(&fwd.probs.view())?,
                        Some(soft) => hier_score(&fwd.probs.view(), soft)?,
                    },
                    Method::Odin => odin_score(
                        &model,
                        &x,
                        config.temperature,
                        config.epsilon,
                        variant,
                        soft.as_ref(),
                    )?,
                    Method::Dmd => bank
                        .as_ref()
                        .expect("bank fitted above")
                        .score(&fwd.penultimate.view())?,
                };
                w.write_record([
                    &format!("r{:05}", r),
                    method.as_str(),
                    variant.as_str(),
                    &beta.map(|b| format!("{}", b)).unwrap_or_default(),
                    &format!("{}", score),
                    tree.leaf_name(predicted)?,
                    "false",
                ])?;
            }
            w.flush()?;
            println!(
                "{}",
                serde_json::json!({ "written": out, "samples": ds.num_samples() })
            );
            Ok(())
        }
        Command::Calibrate { scores, alpha } => {
            let groups = read_score_dump(&scores)?;
            let mut stdout = csv::Writer::from_writer(std::io::stdout());
            stdout.write_record(["method", "variant", "beta", "threshold", "alpha", "iterations", "removed"])?;
            for ((method, variant, beta), rows) in groups {
                let known: Vec<f64> = rows
                    .iter()
                    .filter(|r| !r.is_novel)
                    .map(|r| r.score)
                    .collect();
                if known.is_empty() {
                    continue;
                }
                let calib = calibrate_threshold(&known, alpha)?;
                stdout.write_record([
                    method.as_str(),
                    variant.as_str(),
                    beta.as_str(),
                    &format!("{}", calib.threshold),
                    &format!("{}", calib.alpha),
                    &calib.iterations.to_string(),
                    &calib.removed.to_string(),
                ])?;
            }
            stdout.flush()?;
            Ok(())
        }
        Command::Evaluate { scores } => {
            let groups = read_score_dump(&scores)?;
            let mut stdout = csv::Writer::from_writer(std::io::stdout());
            stdout.write_record(["method", "variant", "beta", "auroc", "n_known", "n_novel"])?;
            for ((method, variant, beta), rows) in groups {
                let known: Vec<f64> = rows
                    .iter()
                    .filter(|r| !r.is_novel)
                    .map(|r| r.score)
                    .collect();
                let novel: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.is_novel)
                    .map(|r| r.score)
                    .collect();
                if known.is_empty() || novel.is_empty() {
                    continue;
                }
                let value = auroc(&known, &novel)?;
                stdout.write_record([
                    method.as_str(),
                    variant.as_str(),
                    beta.as_str(),
                    &format!("{}", value),
                    &known.len().to_string(),
                    &novel.len().to_string(),
                ])?;
            }
            stdout.flush()?;
            Ok(())
        }
        Command::Sweep { config, out, seed } => {
            let config = load_config(&config)?;
            let master = resolve_seed(seed, &config)?;
            let out_dir = out.unwrap_or_else(|| config.output_dir.clone());
            let harness = Harness::from_config(config, Some(master))?;
            let outcome = harness.sweep(&out_dir)?;
            for failure in &outcome.failures {
                eprintln!(
                    "{}",
                    serde_json::json!({
                        "scenario": failure.scenario,
                        "cell": failure.cell,
                        "error": failure.error,
                    })
                );
            }
            println!(
                "{}",
                serde_json::json!({
                    "results": out_dir.join("results.csv"),
                    "rows": outcome.results.len(),
                    "failures": outcome.failures.len(),
                })
            );
            Ok(())
        }
        Command::Report { results, out } => {
            let out_dir = out.unwrap_or_else(|| results.join("report"));
            let written = render_report(&results, &out_dir)?;
            println!(
                "{}",
                serde_json::json!({
                    "out": out_dir,
                    "files": written.len(),
                })
            );
            Ok(())
        }
    }
}

struct DumpRow {
    score: f64,
    is_novel: bool,
}

type DumpGroups = BTreeMap<(Method, Variant, String), Vec<DumpRow>>;

/// Read a score dump grouped by (method, variant, beta).
fn read_score_dump(path: &Path) -> Result<DumpGroups> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let expected = [
        "sample_id",
        "method",
        "variant",
        "beta",
        "score",
        "predicted_leaf",
        "is_novel",
    ];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Evaluation(format!(
            "{}: unexpected score dump header {:?}",
            path.display(),
            headers
        )));
    }
    let mut groups: DumpGroups = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let method = Method::from_str(&record[1])?;
        let variant = Variant::from_str(&record[2])?;
        let beta = record[3].to_string();
        let score: f64 = record[4]
            .parse()
            .map_err(|_| Error::Evaluation(format!("bad score '{}'", &record[4])))?;
        let is_novel = &record[6] == "true";
        groups
            .entry((method, variant, beta))
            .or_default()
            .push(DumpRow { score, is_novel });
    }
    Ok(groups)
}
