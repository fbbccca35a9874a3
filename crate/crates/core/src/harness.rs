//! Leave-one-class-out experiment orchestration: grid construction, parallel
//! cell execution, scoring, calibration, AUROC evaluation, score dumps, and
//! incremental result persistence.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;

use crate::classifier::{argmax, train, ClassifierModel, LabelMode, TrainConfig};
use crate::config::{derive_seed, ExperimentConfig};
use crate::dataset::{generate_synthetic, leave_out_class, load_csv, stratified_split, LabeledDataset};
use crate::error::{Error, Result};
use crate::evaluation::{
    auroc, calibrate_threshold, mean_std, rank_distance_curve, standardize_scores, u1u2_summary,
};
use crate::scores::{
    hier_score, msp_score, odin_score, FitLabelMode, GaussianBank, Method, ScoreRecord, Variant,
};
use crate::taxonomy::{SoftLabelMatrix, TaxonomyTree};

/// Scenario parameters: one held-out leaf plus the detector grid.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub left_out: String,
    pub detectors: Vec<Method>,
    pub variants: Vec<Variant>,
    pub betas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub learning_rates: Vec<f64>,
    pub temperature: f64,
    pub epsilon: f64,
    pub alpha: f64,
}

impl ScenarioSpec {
    pub fn from_config(config: &ExperimentConfig, left_out: &str) -> Self {
        ScenarioSpec {
            left_out: left_out.to_string(),
            detectors: config.detectors.clone(),
            variants: config.variants.clone(),
            betas: config.betas.clone(),
            seeds: config.seeds.clone(),
            learning_rates: config.learning_rates.clone(),
            temperature: config.temperature,
            epsilon: config.epsilon,
            alpha: config.alpha,
        }
    }
}

/// One result row; the unique key is
/// (scenario, method, variant, beta, seed, lr).
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub scenario: String,
    pub method: Method,
    pub variant: Variant,
    pub beta: Option<f64>,
    pub seed: u64,
    pub lr: f64,
    pub auroc: f64,
    pub threshold: f64,
    pub wall_ms: u64,
    pub score_dump: Option<PathBuf>,
}

pub fn beta_str(beta: Option<f64>) -> String {
    beta.map(|b| format!("{}", b)).unwrap_or_default()
}

impl ExperimentResult {
    pub fn key(&self) -> String {
        result_key(
            &self.scenario,
            self.method,
            self.variant,
            self.beta,
            self.seed,
            self.lr,
        )
    }
}

pub fn result_key(
    scenario: &str,
    method: Method,
    variant: Variant,
    beta: Option<f64>,
    seed: u64,
    lr: f64,
) -> String {
    format!(
        "{}|{}|{}|{}|{}|{}",
        scenario,
        method,
        variant,
        beta_str(beta),
        seed,
        lr
    )
}

/// A grid cell that failed; other cells proceed.
#[derive(Debug, Clone)]
pub struct CellFailure {
    pub scenario: String,
    pub cell: String,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct ScenarioOutcome {
    pub results: Vec<ExperimentResult>,
    pub failures: Vec<CellFailure>,
}

#[derive(Debug, Clone)]
struct Cell {
    variant: Variant,
    beta: Option<f64>,
    seed: u64,
    lr: f64,
    exemplar: bool,
}

impl Cell {
    fn id(&self) -> String {
        let beta = beta_str(self.beta);
        if beta.is_empty() {
            format!("{}_s{}_lr{}", self.variant, self.seed, self.lr)
        } else {
            format!("{}_b{}_s{}_lr{}", self.variant, beta, self.seed, self.lr)
        }
    }
}

/// Diagnostic rows produced by an exemplar cell.
#[derive(Debug, Clone, Default)]
struct Diagnostics {
    /// variant, population, rank, mean, ci, n
    rank_rows: Vec<(String, String, usize, f64, f64, usize)>,
    /// variant, beta, method, sample_id, standardized score, is_novel
    std_rows: Vec<(String, String, String, String, f64, bool)>,
    /// variant, population, term, mean, ci, n
    u1u2_rows: Vec<(String, String, String, f64, f64, usize)>,
}

struct CellOutput {
    results: Vec<ExperimentResult>,
    failures: Vec<CellFailure>,
    diagnostics: Option<Diagnostics>,
}

/// Accumulates result rows and rewrites the results file atomically after
/// every append, so an interrupted sweep keeps everything completed so far.
pub struct ResultsSink {
    path: PathBuf,
    rows: Mutex<Vec<ExperimentResult>>,
}

impl ResultsSink {
    pub fn new(path: PathBuf, existing: Vec<ExperimentResult>) -> Self {
        ResultsSink {
            path,
            rows: Mutex::new(existing),
        }
    }

    fn append(&self, new_rows: &[ExperimentResult]) -> Result<()> {
        if new_rows.is_empty() {
            return Ok(());
        }
        let mut rows = self.rows.lock().expect("sink lock");
        rows.extend_from_slice(new_rows);
        let mut sorted = rows.clone();
        sort_results(&mut sorted);
        write_results(&self.path, &sorted)
    }

    pub fn into_rows(self) -> Vec<ExperimentResult> {
        self.rows.into_inner().expect("sink lock")
    }
}

/// Owns the resolved taxonomy and dataset and runs scenarios against them.
pub struct Harness {
    pub config: ExperimentConfig,
    pub tree: TaxonomyTree,
    pub dataset: LabeledDataset,
    pub master_seed: u64,
}

impl Harness {
    /// Resolve the taxonomy and dataset from a config; `seed_override`
    /// replaces the configured master seed.
    pub fn from_config(config: ExperimentConfig, seed_override: Option<u64>) -> Result<Self> {
        config.validate()?;
        let master_seed = seed_override.unwrap_or(config.master_seed);
        let tree = config.resolve_taxonomy()?;
        let dataset = match &config.dataset_path {
            Some(path) => load_csv(path, &tree)?,
            None => {
                let spec = config.resolve_generator(&tree, master_seed);
                generate_synthetic(&tree, &spec)?
            }
        };
        for scenario in &config.scenarios {
            if tree.leaf_index(scenario).is_none() {
                return Err(Error::Config(format!(
                    "scenario leaf '{}' not in the taxonomy",
                    scenario
                )));
            }
        }
        Ok(Harness {
            config,
            tree,
            dataset,
            master_seed,
        })
    }

    /// Run one leave-one-class-out scenario over the full grid. Rows whose
    /// keys appear in `skip` are not recomputed; cells whose rows are all
    /// skipped are not trained at all.
    pub fn run_scenario(
        &self,
        spec: &ScenarioSpec,
        out_dir: Option<&Path>,
        skip: &HashSet<String>,
    ) -> Result<ScenarioOutcome> {
        self.run_scenario_with_sink(spec, out_dir, skip, None)
    }

    /// [`run_scenario`] with incremental persistence of finished cells.
    pub fn run_scenario_with_sink(
        &self,
        spec: &ScenarioSpec,
        out_dir: Option<&Path>,
        skip: &HashSet<String>,
        sink: Option<&ResultsSink>,
    ) -> Result<ScenarioOutcome> {
        let scenario = spec.left_out.clone();
        let leaf = self.tree.leaf_index(&scenario).ok_or_else(|| {
            Error::Config(format!("scenario leaf '{}' not in the taxonomy", scenario))
        })?;
        if spec.detectors.is_empty() || spec.variants.is_empty() {
            return Err(Error::Config("empty detector or variant set".into()));
        }
        if spec.variants.contains(&Variant::Hier) && spec.betas.is_empty() {
            return Err(Error::Config("hier variant requires betas".into()));
        }

        let split = leave_out_class(&self.dataset, &self.tree, leaf)?;
        let split_seed = derive_seed(self.master_seed, &format!("{}|split", scenario));
        let (train_ds, val_ds, test_ds) = stratified_split(
            &split.known,
            (
                self.config.split[0],
                self.config.split[1],
                self.config.split[2],
            ),
            split_seed,
        )?;
        let pruned = split.pruned_tree;
        let novel = split.novel;
        let arch = self
            .config
            .arch_for(self.dataset.feature_dim(), pruned.num_leaves());

        let exemplar_beta = if spec.betas.contains(&10.0) {
            Some(10.0)
        } else {
            spec.betas.first().copied()
        };
        let mut cells = Vec::new();
        for &variant in &spec.variants {
            let betas: Vec<Option<f64>> = match variant {
                Variant::Flat => vec![None],
                Variant::Hier => spec.betas.iter().map(|&b| Some(b)).collect(),
            };
            for beta in betas {
                for &seed in &spec.seeds {
                    for &lr in &spec.learning_rates {
                        let exemplar = seed == spec.seeds[0]
                            && lr == spec.learning_rates[0]
                            && match variant {
                                Variant::Flat => true,
                                Variant::Hier => beta == exemplar_beta,
                            };
                        cells.push(Cell {
                            variant,
                            beta,
                            seed,
                            lr,
                            exemplar,
                        });
                    }
                }
            }
        }

        if let Some(dir) = out_dir {
            std::fs::create_dir_all(dir.join("scores").join(&scenario))?;
            std::fs::create_dir_all(dir.join("diagnostics").join(&scenario))?;
        }

        let outputs: Vec<CellOutput> = cells
            .par_iter()
            .map(|cell| {
                let mut output = self.run_cell(
                    &scenario, spec, cell, &arch, &pruned, &train_ds, &val_ds, &test_ds, &novel,
                    out_dir, skip,
                );
                if let Some(sink) = sink {
                    if let Err(e) = sink.append(&output.results) {
                        output.failures.push(CellFailure {
                            scenario: scenario.clone(),
                            cell: cell.id(),
                            error: format!("persisting results failed: {}", e),
                        });
                    }
                }
                output
            })
            .collect();

        let mut outcome = ScenarioOutcome::default();
        let mut diagnostics = Vec::new();
        for output in outputs {
            outcome.results.extend(output.results);
            outcome.failures.extend(output.failures);
            if let Some(d) = output.diagnostics {
                diagnostics.push(d);
            }
        }
        sort_results(&mut outcome.results);
        outcome.failures.sort_by(|a, b| a.cell.cmp(&b.cell));

        if let Some(dir) = out_dir {
            self.write_diagnostics(dir, &scenario, &mut diagnostics)?;
        }
        Ok(outcome)
    }

    /// Run one scenario with an explicit beta grid.
    pub fn sweep_beta(
        &self,
        scenario: &str,
        betas: &[f64],
        out_dir: Option<&Path>,
        skip: &HashSet<String>,
    ) -> Result<ScenarioOutcome> {
        let mut spec = ScenarioSpec::from_config(&self.config, scenario);
        spec.betas = betas.to_vec();
        self.run_scenario(&spec, out_dir, skip)
    }

    /// Run every configured scenario, skipping result rows already present
    /// in `<out_dir>/results.csv`. Rows are persisted incrementally (the
    /// file is rewritten atomically as cells finish), so an interrupted
    /// sweep resumes from what completed.
    pub fn sweep(&self, out_dir: &Path) -> Result<ScenarioOutcome> {
        std::fs::create_dir_all(out_dir)?;
        let results_path = out_dir.join("results.csv");
        let existing = if results_path.exists() {
            read_results(&results_path)?
        } else {
            Vec::new()
        };
        let skip: HashSet<String> = existing.iter().map(|r| r.key()).collect();

        let sink = ResultsSink::new(results_path.clone(), existing);
        let mut failures = Vec::new();
        for scenario in &self.config.scenarios {
            let spec = ScenarioSpec::from_config(&self.config, scenario);
            let outcome = self.run_scenario_with_sink(&spec, Some(out_dir), &skip, Some(&sink))?;
            failures.extend(outcome.failures);
        }
        let mut merged = sink.into_rows();
        sort_results(&mut merged);
        let mut seen = HashSet::new();
        for row in &merged {
            if !seen.insert(row.key()) {
                return Err(Error::Evaluation(format!(
                    "duplicate result row for key {}",
                    row.key()
                )));
            }
        }
        write_results(&results_path, &merged)?;
        Ok(ScenarioOutcome {
            results: merged,
            failures,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn run_cell(
        &self,
        scenario: &str,
        spec: &ScenarioSpec,
        cell: &Cell,
        arch: &crate::classifier::ArchSpec,
        pruned: &TaxonomyTree,
        train_ds: &LabeledDataset,
        val_ds: &LabeledDataset,
        test_ds: &LabeledDataset,
        novel: &LabeledDataset,
        out_dir: Option<&Path>,
        skip: &HashSet<String>,
    ) -> CellOutput {
        let mut output = CellOutput {
            results: Vec::new(),
            failures: Vec::new(),
            diagnostics: None,
        };
        let pending: Vec<Method> = spec
            .detectors
            .iter()
            .copied()
            .filter(|&m| {
                !skip.contains(&result_key(
                    scenario, m, cell.variant, cell.beta, cell.seed, cell.lr,
                ))
            })
            .collect();
        if pending.is_empty() {
            return output;
        }

        let started = Instant::now();
        let cell_key = format!(
            "{}|{}|{}|{}|{}",
            scenario,
            cell.variant,
            beta_str(cell.beta),
            cell.seed,
            cell.lr
        );
        let cell_seed = derive_seed(self.master_seed, &cell_key);
        let label_mode = match cell.beta {
            None => LabelMode::Flat,
            Some(beta) => LabelMode::Hierarchical { beta },
        };
        let train_config = TrainConfig {
            learning_rate: cell.lr,
            epochs: self.config.train.epochs,
            batch_size: self.config.train.batch_size,
            seed: cell_seed,
            label_mode,
            weight_decay: self.config.train.weight_decay,
            momentum: self.config.train.momentum,
        };

        let model = ClassifierModel::new(arch, cell_seed);
        let model = match train(model, train_ds, val_ds, pruned, &train_config) {
            Ok((model, _)) => model,
            Err(e) => {
                output.failures.push(CellFailure {
                    scenario: scenario.to_string(),
                    cell: cell.id(),
                    error: format!("training failed: {}", e),
                });
                return output;
            }
        };

        let soft = match cell.beta {
            Some(beta) => match SoftLabelMatrix::build(pruned, beta) {
                Ok(s) => Some(s),
                Err(e) => {
                    output.failures.push(CellFailure {
                        scenario: scenario.to_string(),
                        cell: cell.id(),
                        error: e.to_string(),
                    });
                    return output;
                }
            },
            None => None,
        };

        let bank = if pending.contains(&Method::Dmd) {
            match self.fit_bank(&model, train_ds) {
                Ok(bank) => Some(bank),
                Err(e) => {
                    output.failures.push(CellFailure {
                        scenario: scenario.to_string(),
                        cell: format!("{}|dmd", cell.id()),
                        error: format!("dmd fit failed: {}", e),
                    });
                    None
                }
            }
        } else {
            None
        };

        let mut dump_rows: Vec<(ScoreRecord, bool)> = Vec::new();
        let mut std_rows: Vec<(String, String, String, String, f64, bool)> = Vec::new();
        for &method in &pending {
            if method == Method::Dmd && bank.is_none() {
                continue;
            }
            let scored = (|| -> Result<(ExperimentResult, Vec<(ScoreRecord, bool)>)> {
                let val_scores =
                    self.score_rows(method, cell.variant, &model, soft.as_ref(), bank.as_ref(), val_ds, spec)?;
                let calib = calibrate_threshold(&collect_scores(&val_scores), spec.alpha)?;
                let known =
                    self.score_rows(method, cell.variant, &model, soft.as_ref(), bank.as_ref(), test_ds, spec)?;
                let novel_scores =
                    self.score_rows(method, cell.variant, &model, soft.as_ref(), bank.as_ref(), novel, spec)?;
                let value = auroc(&collect_scores(&known), &collect_scores(&novel_scores))?;

                let mut rows: Vec<(ScoreRecord, bool)> = Vec::new();
                for (i, (score, predicted)) in known.iter().enumerate() {
                    rows.push((
                        ScoreRecord {
                            sample_id: format!("t{:04}", i),
                            method,
                            variant: cell.variant,
                            score: *score,
                            predicted: *predicted,
                        },
                        false,
                    ));
                }
                for (i, (score, predicted)) in novel_scores.iter().enumerate() {
                    rows.push((
                        ScoreRecord {
                            sample_id: format!("n{:04}", i),
                            method,
                            variant: cell.variant,
                            score: *score,
                            predicted: *predicted,
                        },
                        true,
                    ));
                }
                if cell.exemplar {
                    let (vm, vs) = mean_std(&collect_scores(&val_scores))?;
                    let scores: Vec<f64> = rows.iter().map(|(r, _)| r.score).collect();
                    let z = standardize_scores(&scores, vm, vs)?;
                    for ((record, is_novel), zscore) in rows.iter().zip(z) {
                        std_rows.push((
                            cell.variant.to_string(),
                            beta_str(cell.beta),
                            method.to_string(),
                            record.sample_id.clone(),
                            zscore,
                            *is_novel,
                        ));
                    }
                }
                let result = ExperimentResult {
                    scenario: scenario.to_string(),
                    method,
                    variant: cell.variant,
                    beta: cell.beta,
                    seed: cell.seed,
                    lr: cell.lr,
                    auroc: value,
                    threshold: calib.threshold,
                    wall_ms: started.elapsed().as_millis() as u64,
                    score_dump: None,
                };
                Ok((result, rows))
            })();
            match scored {
                Ok((result, rows)) => {
                    output.results.push(result);
                    dump_rows.extend(rows);
                }
                Err(e) => output.failures.push(CellFailure {
                    scenario: scenario.to_string(),
                    cell: format!("{}|{}", cell.id(), method),
                    error: e.to_string(),
                }),
            }
        }

        if let Some(dir) = out_dir {
            if !dump_rows.is_empty() {
                let path = dir
                    .join("scores")
                    .join(scenario)
                    .join(format!("{}.csv", cell.id()));
                if let Err(e) = self.write_score_dump(&path, cell, pruned, &dump_rows) {
                    output.failures.push(CellFailure {
                        scenario: scenario.to_string(),
                        cell: cell.id(),
                        error: format!("score dump failed: {}", e),
                    });
                } else {
                    for r in &mut output.results {
                        r.score_dump = Some(path.clone());
                    }
                }
            }
        }

        if cell.exemplar {
            match self.cell_diagnostics(cell, &model, pruned, test_ds, novel, spec) {
                Ok(mut d) => {
                    d.std_rows = std_rows;
                    output.diagnostics = Some(d);
                }
                Err(e) => output.failures.push(CellFailure {
                    scenario: scenario.to_string(),
                    cell: format!("{}|diagnostics", cell.id()),
                    error: e.to_string(),
                }),
            }
        }
        output
    }

    fn fit_bank(&self, model: &ClassifierModel, train_ds: &LabeledDataset) -> Result<GaussianBank> {
        let features = model.penultimate_batch(&train_ds.features().view())?;
        let labels: Vec<usize> = match self.config.dmd_fit_labels {
            FitLabelMode::True => train_ds.labels().to_vec(),
            FitLabelMode::Predicted => {
                let mut preds = Vec::with_capacity(train_ds.num_samples());
                for r in 0..train_ds.num_samples() {
                    let probs = model.forward(&train_ds.features().row(r))?.probs;
                    preds.push(argmax(&probs.view()));
                }
                preds
            }
        };
        GaussianBank::fit(
            &features.view(),
            &labels,
            train_ds.num_classes(),
            self.config.dmd_fit_labels,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn score_rows(
        &self,
        method: Method,
        variant: Variant,
        model: &ClassifierModel,
        soft: Option<&SoftLabelMatrix>,
        bank: Option<&GaussianBank>,
        ds: &LabeledDataset,
        spec: &ScenarioSpec,
    ) -> Result<Vec<(f64, usize)>> {
        let mut rows = Vec::with_capacity(ds.num_samples());
        for r in 0..ds.num_samples() {
            let x = ds.features().row(r);
            let fwd = model.forward(&x)?;
            let predicted = argmax(&fwd.probs.view());
            let score = match (method, variant) {
                (Method::Msp, Variant::Flat) => msp_score(&fwd.probs.view())?,
                (Method::Msp, Variant::Hier) => {
                    let soft = soft.ok_or_else(|| {
                        Error::Score("hier msp needs a soft-label matrix".into())
                    })?;
                    hier_score(&fwd.probs.view(), soft)?
                }
                (Method::Odin, _) => odin_score(
                    model,
                    &x,
                    spec.temperature,
                    spec.epsilon,
                    variant,
                    soft,
                )?,
                (Method::Dmd, _) => {
                    let bank = bank.ok_or_else(|| Error::Score("dmd bank missing".into()))?;
                    bank.score(&fwd.penultimate.view())?
                }
            };
            rows.push((score, predicted));
        }
        Ok(rows)
    }

    fn cell_diagnostics(
        &self,
        cell: &Cell,
        model: &ClassifierModel,
        pruned: &TaxonomyTree,
        test_ds: &LabeledDataset,
        novel: &LabeledDataset,
        spec: &ScenarioSpec,
    ) -> Result<Diagnostics> {
        let mut d = Diagnostics::default();
        let curve = rank_distance_curve(model, test_ds, novel, pruned)?;
        for (i, &rank) in curve.ranks.iter().enumerate() {
            d.rank_rows.push((
                cell.variant.to_string(),
                "known".into(),
                rank,
                curve.known[i].mean,
                curve.known[i].ci_half_width,
                curve.known[i].n,
            ));
            d.rank_rows.push((
                cell.variant.to_string(),
                "novel".into(),
                rank,
                curve.novel[i].mean,
                curve.novel[i].ci_half_width,
                curve.novel[i].n,
            ));
        }
        let soft_for_u = match cell.beta {
            Some(beta) => SoftLabelMatrix::build(pruned, beta)?,
            None => SoftLabelMatrix::one_hot_rows(pruned.num_leaves())?,
        };
        let summary = u1u2_summary(model, test_ds, novel, spec.temperature, &soft_for_u)?;
        for (pop, term, stat) in [
            ("known", "u1", summary.known_u1),
            ("known", "u2", summary.known_u2),
            ("novel", "u1", summary.novel_u1),
            ("novel", "u2", summary.novel_u2),
        ] {
            d.u1u2_rows.push((
                cell.variant.to_string(),
                pop.into(),
                term.into(),
                stat.mean,
                stat.ci_half_width,
                stat.n,
            ));
        }
        Ok(d)
    }

    fn write_score_dump(
        &self,
        path: &Path,
        cell: &Cell,
        pruned: &TaxonomyTree,
        rows: &[(ScoreRecord, bool)],
    ) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "sample_id",
            "method",
            "variant",
            "beta",
            "score",
            "predicted_leaf",
            "is_novel",
        ])?;
        for (record, is_novel) in rows {
            w.write_record([
                record.sample_id.as_str(),
                record.method.as_str(),
                record.variant.as_str(),
                &beta_str(cell.beta),
                &format!("{}", record.score),
                pruned.leaf_name(record.predicted)?,
                if *is_novel { "true" } else { "false" },
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    fn write_diagnostics(
        &self,
        out_dir: &Path,
        scenario: &str,
        diagnostics: &mut [Diagnostics],
    ) -> Result<()> {
        if diagnostics.is_empty() {
            return Ok(());
        }
        diagnostics.sort_by(|a, b| {
            let ka = a.rank_rows.first().map(|r| r.0.clone()).unwrap_or_default();
            let kb = b.rank_rows.first().map(|r| r.0.clone()).unwrap_or_default();
            ka.cmp(&kb)
        });
        let dir = out_dir.join("diagnostics").join(scenario);

        let mut w = csv::Writer::from_path(dir.join("rank_distance.csv"))?;
        w.write_record(["variant", "population", "rank", "mean_distance", "ci_half_width", "n"])?;
        for d in diagnostics.iter() {
            for (variant, pop, rank, mean, ci, n) in &d.rank_rows {
                w.write_record([
                    variant.as_str(),
                    pop.as_str(),
                    &rank.to_string(),
                    &format!("{}", mean),
                    &format!("{}", ci),
                    &n.to_string(),
                ])?;
            }
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("u1u2.csv"))?;
        w.write_record(["variant", "population", "term", "mean", "ci_half_width", "n"])?;
        for d in diagnostics.iter() {
            for (variant, pop, term, mean, ci, n) in &d.u1u2_rows {
                w.write_record([
                    variant.as_str(),
                    pop.as_str(),
                    term.as_str(),
                    &format!("{}", mean),
                    &format!("{}", ci),
                    &n.to_string(),
                ])?;
            }
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("standardized_scores.csv"))?;
        w.write_record(["variant", "beta", "method", "sample_id", "score_std", "is_novel"])?;
        for d in diagnostics.iter() {
            for (variant, beta, method, id, z, is_novel) in &d.std_rows {
                w.write_record([
                    variant.as_str(),
                    beta.as_str(),
                    method.as_str(),
                    id.as_str(),
                    &format!("{}", z),
                    if *is_novel { "true" } else { "false" },
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn collect_scores(rows: &[(f64, usize)]) -> Vec<f64> {
    rows.iter().map(|r| r.0).collect()
}

pub fn sort_results(rows: &mut [ExperimentResult]) {
    rows.sort_by(|a, b| {
        a.scenario
            .cmp(&b.scenario)
            .then(a.method.as_str().cmp(b.method.as_str()))
            .then(a.variant.as_str().cmp(b.variant.as_str()))
            .then(
                a.beta
                    .unwrap_or(f64::NEG_INFINITY)
                    .total_cmp(&b.beta.unwrap_or(f64::NEG_INFINITY)),
            )
            .then(a.seed.cmp(&b.seed))
            .then(a.lr.total_cmp(&b.lr))
    });
}

/// Write result rows as CSV via a temp file and atomic rename.
pub fn write_results(path: &Path, rows: &[ExperimentResult]) -> Result<()> {
    let tmp = path.with_extension("csv.tmp");
    {
        let mut w = csv::Writer::from_path(&tmp)?;
        w.write_record([
            "scenario",
            "method",
            "variant",
            "beta",
            "seed",
            "lr",
            "auroc",
            "threshold",
            "wall_ms",
        ])?;
        for r in rows {
            w.write_record([
                r.scenario.as_str(),
                r.method.as_str(),
                r.variant.as_str(),
                &beta_str(r.beta),
                &r.seed.to_string(),
                &format!("{}", r.lr),
                &format!("{}", r.auroc),
                &format!("{}", r.threshold),
                &r.wall_ms.to_string(),
            ])?;
        }
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Read result rows written by [`write_results`].
pub fn read_results(path: &Path) -> Result<Vec<ExperimentResult>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let expected = [
        "scenario",
        "method",
        "variant",
        "beta",
        "seed",
        "lr",
        "auroc",
        "threshold",
        "wall_ms",
    ];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Evaluation(format!(
            "{}: unexpected results header {:?}",
            path.display(),
            headers
        )));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let parse_f64 = |s: &str, what: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Evaluation(format!("bad {} value '{}'", what, s)))
        };
        let beta = if record[3].is_empty() {
            None
        } else {
            Some(parse_f64(&record[3], "beta")?)
        };
        rows.push(ExperimentResult {
            scenario: record[0].to_string(),
            method: record[1].parse()?,
            variant: record[2].parse()?,
            beta,
            seed: record[4]
                .parse()
                .map_err(|_| Error::Evaluation(format!("bad seed '{}'", &record[4])))?,
            lr: parse_f64(&record[5], "lr")?,
            auroc: parse_f64(&record[6], "auroc")?,
            threshold: parse_f64(&record[7], "threshold")?,
            wall_ms: record[8]
                .parse()
                .map_err(|_| Error::Evaluation(format!("bad wall_ms '{}'", &record[8])))?,
            score_dump: None,
        });
    }
    Ok(rows)
}
