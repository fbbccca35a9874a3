//! Experiment configuration file (JSON) shared by the library harness and
//! the command-line tool.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::ArchSpec;
use crate::dataset::GeneratorSpec;
use crate::error::{Error, Result};
use crate::scores::{FitLabelMode, Method, Variant};
use crate::taxonomy::{default_fault_taxonomy, TaxonomyTree};

/// Synthetic generator settings; counts and seed fall back to built-in
/// defaults when omitted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorSettings {
    #[serde(default = "default_feature_dim")]
    pub feature_dim: usize,
    #[serde(default = "default_sigma_parent")]
    pub sigma_parent: f64,
    #[serde(default = "default_sigma_child")]
    pub sigma_child: f64,
    #[serde(default = "default_sigma_noise")]
    pub sigma_noise: f64,
    /// Per-leaf sample counts; omitted means the rolling-defect table for
    /// the built-in taxonomy or 100 per leaf otherwise.
    #[serde(default)]
    pub counts: Option<std::collections::BTreeMap<String, usize>>,
    /// Generator seed; omitted means derived from the master seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for GeneratorSettings {
    fn default() -> Self {
        GeneratorSettings {
            feature_dim: default_feature_dim(),
            sigma_parent: default_sigma_parent(),
            sigma_child: default_sigma_child(),
            sigma_noise: default_sigma_noise(),
            counts: None,
            seed: None,
        }
    }
}

fn default_feature_dim() -> usize {
    16
}
fn default_sigma_parent() -> f64 {
    4.0
}
fn default_sigma_child() -> f64 {
    1.0
}
fn default_sigma_noise() -> f64 {
    0.5
}

/// Training hyperparameters exposed through the config file; the learning
/// rate and label mode are per-grid-cell and live in the harness.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSettings {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            hidden: default_hidden(),
            weight_decay: default_weight_decay(),
            momentum: default_momentum(),
        }
    }
}

fn default_epochs() -> usize {
    300
}
fn default_batch_size() -> usize {
    32
}
fn default_hidden() -> Vec<usize> {
    vec![64, 32]
}
fn default_weight_decay() -> f64 {
    1e-4
}
fn default_momentum() -> f64 {
    0.9
}

/// Top-level experiment configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Taxonomy document path; omitted means the built-in 14-leaf hierarchy.
    #[serde(default)]
    pub taxonomy_path: Option<PathBuf>,
    /// Pre-generated dataset CSV; omitted means synthetic generation.
    #[serde(default)]
    pub dataset_path: Option<PathBuf>,
    #[serde(default)]
    pub generator: GeneratorSettings,
    /// Leaf names held out one at a time, each a scenario.
    #[serde(default = "default_scenarios")]
    pub scenarios: Vec<String>,
    #[serde(default = "default_detectors")]
    pub detectors: Vec<Method>,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    #[serde(default = "default_betas")]
    pub betas: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_learning_rates")]
    pub learning_rates: Vec<f64>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_split")]
    pub split: [f64; 3],
    #[serde(default)]
    pub train: TrainSettings,
    #[serde(default = "default_dmd_fit_labels")]
    pub dmd_fit_labels: FitLabelMode,
    #[serde(default = "default_master_seed")]
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_scenarios() -> Vec<String> {
    ["A12", "A31", "A61", "A40"].iter().map(|s| s.to_string()).collect()
}
fn default_detectors() -> Vec<Method> {
    vec![Method::Msp, Method::Odin, Method::Dmd]
}
fn default_variants() -> Vec<Variant> {
    vec![Variant::Flat, Variant::Hier]
}
fn default_betas() -> Vec<f64> {
    vec![0.1, 1.0, 10.0, 100.0]
}
fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}
fn default_learning_rates() -> Vec<f64> {
    vec![0.003, 0.01, 0.03]
}
fn default_temperature() -> f64 {
    1000.0
}
fn default_epsilon() -> f64 {
    0.0012
}
fn default_alpha() -> f64 {
    0.05
}
fn default_split() -> [f64; 3] {
    [0.6, 0.2, 0.2]
}
fn default_dmd_fit_labels() -> FitLabelMode {
    FitLabelMode::True
}
fn default_master_seed() -> u64 {
    42
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config deserializes to defaults")
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), e)))?;
        let config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), e)))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(Error::Config("at least one scenario required".into()));
        }
        if self.detectors.is_empty() || self.variants.is_empty() {
            return Err(Error::Config("detector and variant sets must be nonempty".into()));
        }
        if self.variants.contains(&Variant::Hier) && self.betas.is_empty() {
            return Err(Error::Config("hier variant requires a nonempty beta grid".into()));
        }
        if self.betas.iter().any(|&b| !(b > 0.0) || !b.is_finite()) {
            return Err(Error::Config("betas must be positive and finite".into()));
        }
        if self.seeds.is_empty() || self.learning_rates.is_empty() {
            return Err(Error::Config("seed and learning-rate grids must be nonempty".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha must lie strictly between 0 and 1, got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// The configured taxonomy: a document file or the built-in hierarchy.
    pub fn resolve_taxonomy(&self) -> Result<TaxonomyTree> {
        match &self.taxonomy_path {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("{}: {}", path.display(), e)))?;
                TaxonomyTree::parse(&text)
            }
            None => Ok(default_fault_taxonomy()),
        }
    }

    /// Concrete generator spec for a taxonomy, filling count and seed
    /// defaults.
    pub fn resolve_generator(&self, tree: &TaxonomyTree, master_seed: u64) -> GeneratorSpec {
        let seed = self
            .generator
            .seed
            .unwrap_or_else(|| derive_seed(master_seed, "generate"));
        let counts = match &self.generator.counts {
            Some(counts) => counts.clone(),
            None => {
                let steel = GeneratorSpec::steel_defaults(0).counts;
                let names = tree.leaf_names();
                if names.iter().all(|n| steel.contains_key(n)) && names.len() == steel.len() {
                    steel
                } else {
                    names.into_iter().map(|n| (n, 100)).collect()
                }
            }
        };
        GeneratorSpec {
            feature_dim: self.generator.feature_dim,
            counts,
            sigma_parent: self.generator.sigma_parent,
            sigma_child: self.generator.sigma_child,
            sigma_noise: self.generator.sigma_noise,
            seed,
        }
    }

    /// Architecture for a given dataset/taxonomy pair.
    pub fn arch_for(&self, input_dim: usize, num_classes: usize) -> ArchSpec {
        ArchSpec::new(input_dim, self.train.hidden.clone(), num_classes)
    }
}

/// Stable seed derivation: FNV-1a over the master seed and a cell key, so
/// per-cell RNG streams do not depend on scheduling or platform.
pub fn derive_seed(master: u64, key: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in master.to_le_bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3);
    }
    for &b in key.as_bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
