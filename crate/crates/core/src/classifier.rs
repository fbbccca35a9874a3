//! A small feed-forward softmax classifier with exact analytic gradients.
//!
//! The network is a multilayer perceptron with tanh hidden layers; the last
//! hidden activation is the penultimate feature vector g(x) consumed by the
//! Mahalanobis detector, and the smooth nonlinearity keeps input gradients
//! twice-differentiable for the perturbation analysis.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::taxonomy::{SoftLabelMatrix, TaxonomyTree};

/// Layer widths: input D, hidden sizes, output K.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
}

impl ArchSpec {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize) -> Self {
        ArchSpec {
            input_dim,
            hidden,
            output_dim,
        }
    }

    /// Default desk-scale architecture: D -> 64 -> 32 -> K.
    pub fn default_for(input_dim: usize, output_dim: usize) -> Self {
        ArchSpec::new(input_dim, vec![64, 32], output_dim)
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::new();
        let mut prev = self.input_dim;
        for &h in &self.hidden {
            dims.push((h, prev));
            prev = h;
        }
        dims.push((self.output_dim, prev));
        dims
    }
}

/// How training targets are built from labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LabelMode {
    /// One-hot targets.
    Flat,
    /// Soft-label targets from the taxonomy at this beta.
    Hierarchical { beta: f64 },
}

/// Training hyperparameters. The optimizer is SGD with momentum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub label_mode: LabelMode,
    pub weight_decay: f64,
    pub momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            epochs: 300,
            batch_size: 32,
            seed: 0,
            label_mode: LabelMode::Flat,
            weight_decay: 1e-4,
            momentum: 0.9,
        }
    }
}

/// Per-epoch losses recorded during training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
}

/// Feed-forward classifier parameters. Weight matrices are (out x in).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    arch: ArchSpec,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    trained: bool,
}

/// Single-sample forward products.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Last hidden activation g(x); the input itself when there are no
    /// hidden layers.
    pub penultimate: Array1<f64>,
    pub logits: Array1<f64>,
    pub probs: Array1<f64>,
}

/// Gradients of the mean batch loss with respect to all parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

struct BatchForward {
    /// activations[0] is the input batch; activations[l>0] are tanh outputs.
    activations: Vec<Array2<f64>>,
    logits: Array2<f64>,
    probs: Array2<f64>,
}

impl ClassifierModel {
    /// Fresh model with fan-in-scaled uniform initialization.
    pub fn new(arch: &ArchSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (out, inp) in arch.layer_dims() {
            let bound = 1.0 / (inp as f64).sqrt();
            let w = Array2::from_shape_fn((out, inp), |_| rng.gen_range(-bound..bound));
            weights.push(w);
            biases.push(Array1::zeros(out));
        }
        ClassifierModel {
            arch: arch.clone(),
            weights,
            biases,
            trained: false,
        }
    }

    /// Model from explicit parameters; shapes must chain correctly.
    pub fn with_params(
        arch: &ArchSpec,
        weights: Vec<Array2<f64>>,
        biases: Vec<Array1<f64>>,
    ) -> Result<Self> {
        let dims = arch.layer_dims();
        if weights.len() != dims.len() || biases.len() != dims.len() {
            return Err(Error::Model(format!(
                "expected {} layers, got {} weights / {} biases",
                dims.len(),
                weights.len(),
                biases.len()
            )));
        }
        for (l, (out, inp)) in dims.iter().enumerate() {
            if weights[l].dim() != (*out, *inp) || biases[l].len() != *out {
                return Err(Error::Model(format!("layer {} has mismatched shape", l)));
            }
        }
        if weights.iter().flatten().any(|v| !v.is_finite())
            || biases.iter().flatten().any(|v| !v.is_finite())
        {
            return Err(Error::Model("non-finite parameter".into()));
        }
        Ok(ClassifierModel {
            arch: arch.clone(),
            weights,
            biases,
            trained: false,
        })
    }

    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn num_classes(&self) -> usize {
        self.arch.output_dim
    }

    fn check_input(&self, xs: &ArrayView2<f64>) -> Result<()> {
        if xs.ncols() != self.arch.input_dim {
            return Err(Error::Model(format!(
                "input dim {} does not match model input {}",
                xs.ncols(),
                self.arch.input_dim
            )));
        }
        if xs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Model("non-finite input".into()));
        }
        Ok(())
    }

    fn forward_batch(&self, xs: &ArrayView2<f64>) -> Result<BatchForward> {
        self.check_input(xs)?;
        let n_layers = self.weights.len();
        let mut activations = vec![xs.to_owned()];
        for l in 0..n_layers - 1 {
            let z = activations[l].dot(&self.weights[l].t()) + &self.biases[l];
            activations.push(z.mapv(f64::tanh));
        }
        let logits = activations[n_layers - 1].dot(&self.weights[n_layers - 1].t())
            + &self.biases[n_layers - 1];
        let mut probs = Array2::zeros(logits.raw_dim());
        for (mut out, row) in probs.rows_mut().into_iter().zip(logits.rows()) {
            out.assign(&softmax_t(&row, 1.0)?);
        }
        Ok(BatchForward {
            activations,
            logits,
            probs,
        })
    }

    /// Forward pass exposing penultimate features, logits, and softmax probs.
    pub fn forward(&self, x: &ArrayView1<f64>) -> Result<Forward> {
        let xs = x
            .to_shape((1, x.len()))
            .map_err(|e| Error::Model(e.to_string()))?;
        let fwd = self.forward_batch(&xs.view())?;
        Ok(Forward {
            penultimate: fwd.activations.last().unwrap().row(0).to_owned(),
            logits: fwd.logits.row(0).to_owned(),
            probs: fwd.probs.row(0).to_owned(),
        })
    }

    /// Penultimate features g(x) for every row of a feature matrix.
    pub fn penultimate_batch(&self, xs: &ArrayView2<f64>) -> Result<Array2<f64>> {
        let fwd = self.forward_batch(xs)?;
        Ok(fwd.activations.last().unwrap().clone())
    }

    /// Mean soft-cross-entropy of the model over a dataset, with targets
    /// taken per label from the given K x K target matrix.
    pub fn mean_loss(&self, ds: &LabeledDataset, targets: &Array2<f64>) -> Result<f64> {
        let fwd = self.forward_batch(&ds.features().view())?;
        let mut total = 0.0;
        for (r, &label) in ds.labels().iter().enumerate() {
            total += soft_ce_loss(&fwd.probs.row(r), &targets.row(label))?;
        }
        Ok(total / ds.num_samples() as f64)
    }

    /// Save a versioned checkpoint; `load` reproduces outputs bitwise.
    pub fn save(&self, path: &Path) -> Result<()> {
        let ckpt = Checkpoint {
            format_version: 1,
            arch: self.arch.clone(),
            trained: self.trained,
            weights: self
                .weights
                .iter()
                .map(|w| w.iter().map(|v| v.to_bits()).collect())
                .collect(),
            biases: self
                .biases
                .iter()
                .map(|b| b.iter().map(|v| v.to_bits()).collect())
                .collect(),
        };
        std::fs::write(path, serde_json::to_string(&ckpt)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if ckpt.format_version != 1 {
            return Err(Error::Model(format!(
                "unsupported checkpoint version {}",
                ckpt.format_version
            )));
        }
        let dims = ckpt.arch.layer_dims();
        if ckpt.weights.len() != dims.len() || ckpt.biases.len() != dims.len() {
            return Err(Error::Model("checkpoint layer count mismatch".into()));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (l, (out, inp)) in dims.iter().enumerate() {
            let w: Vec<f64> = ckpt.weights[l].iter().map(|&b| f64::from_bits(b)).collect();
            let arr = Array2::from_shape_vec((*out, *inp), w)
                .map_err(|_| Error::Model(format!("checkpoint layer {} shape mismatch", l)))?;
            weights.push(arr);
            if ckpt.biases[l].len() != *out {
                return Err(Error::Model(format!("checkpoint bias {} shape mismatch", l)));
            }
            biases.push(Array1::from_iter(
                ckpt.biases[l].iter().map(|&b| f64::from_bits(b)),
            ));
        }
        let mut model = ClassifierModel::with_params(&ckpt.arch, weights, biases)?;
        model.trained = ckpt.trained;
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format_version: u32,
    arch: ArchSpec,
    trained: bool,
    weights: Vec<Vec<u64>>,
    biases: Vec<Vec<u64>>,
}

/// Temperature-scaled softmax, computed in log space.
pub fn softmax_t(logits: &ArrayView1<f64>, t: f64) -> Result<Array1<f64>> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Model(format!(
            "temperature must be positive, got {}",
            t
        )));
    }
    if logits.is_empty() {
        return Err(Error::Model("empty logits".into()));
    }
    let scaled = logits.mapv(|g| g / t);
    let m = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps = scaled.mapv(|s| (s - m).exp());
    let z = exps.sum();
    Ok(exps / z)
}

static CLAMP_WARNINGS: AtomicU64 = AtomicU64::new(0);

/// Number of times a zero probability had to be clamped inside
/// [`soft_ce_loss`] since process start.
pub fn soft_ce_clamp_count() -> u64 {
    CLAMP_WARNINGS.load(Ordering::Relaxed)
}

/// Soft-target cross-entropy `-sum_k target_k ln probs_k`. Reduces to the
/// standard cross-entropy for one-hot targets. Probabilities below 1e-300
/// where the target has mass are clamped and counted.
pub fn soft_ce_loss(probs: &ArrayView1<f64>, target: &ArrayView1<f64>) -> Result<f64> {
    if probs.len() != target.len() {
        return Err(Error::Model(format!(
            "probs length {} != target length {}",
            probs.len(),
            target.len()
        )));
    }
    for (name, v) in [("probs", probs.view()), ("target", target.view())] {
        let sum: f64 = v.sum();
        if (sum - 1.0).abs() > 1e-9 || v.iter().any(|&p| p < -1e-12) {
            return Err(Error::Model(format!(
                "{} not on the simplex (sum {})",
                name, sum
            )));
        }
    }
    let mut loss = 0.0;
    for (&t, &p) in target.iter().zip(probs.iter()) {
        if t > 0.0 {
            let p = if p < 1e-300 {
                CLAMP_WARNINGS.fetch_add(1, Ordering::Relaxed);
                1e-300
            } else {
                p
            };
            loss -= t * p.ln();
        }
    }
    Ok(loss)
}

/// Exact gradient of the mean soft-cross-entropy over a batch with respect
/// to every weight and bias.
pub fn param_gradient(
    model: &ClassifierModel,
    xs: &ArrayView2<f64>,
    targets: &ArrayView2<f64>,
) -> Result<Gradients> {
    if targets.nrows() != xs.nrows() || targets.ncols() != model.arch.output_dim {
        return Err(Error::Model(format!(
            "targets shape {:?} does not match batch {} x {}",
            targets.dim(),
            xs.nrows(),
            model.arch.output_dim
        )));
    }
    let fwd = model.forward_batch(xs)?;
    let b = xs.nrows() as f64;
    let mut delta = (&fwd.probs - targets) / b;
    let n_layers = model.weights.len();
    let mut grads = Gradients {
        weights: Vec::with_capacity(n_layers),
        biases: Vec::with_capacity(n_layers),
    };
    for l in (0..n_layers).rev() {
        grads.weights.push(delta.t().dot(&fwd.activations[l]));
        grads.biases.push(delta.sum_axis(Axis(0)));
        if l > 0 {
            let upstream = delta.dot(&model.weights[l]);
            delta = upstream * fwd.activations[l].mapv(|a| 1.0 - a * a);
        }
    }
    grads.weights.reverse();
    grads.biases.reverse();
    Ok(grads)
}

/// Exact gradient of `ln f_k(x; T)` with respect to the input vector.
pub fn input_gradient(
    model: &ClassifierModel,
    x: &ArrayView1<f64>,
    t: f64,
    class_k: usize,
) -> Result<Array1<f64>> {
    if class_k >= model.arch.output_dim {
        return Err(Error::Model(format!(
            "class {} out of range (K={})",
            class_k, model.arch.output_dim
        )));
    }
    let xs = x
        .to_shape((1, x.len()))
        .map_err(|e| Error::Model(e.to_string()))?;
    let fwd = model.forward_batch(&xs.view())?;
    let p = softmax_t(&fwd.logits.row(0), t)?;
    // d ln f_k / d logits_j = (1[j=k] - p_j) / T.
    let mut seed = p.mapv(|v| -v / t);
    seed[class_k] += 1.0 / t;
    let mut delta = seed.to_shape((1, seed.len())).unwrap().to_owned();
    let n_layers = model.weights.len();
    for l in (0..n_layers).rev() {
        let upstream = delta.dot(&model.weights[l]);
        if l > 0 {
            delta = upstream * fwd.activations[l].mapv(|a| 1.0 - a * a);
        } else {
            return Ok(upstream.row(0).to_owned());
        }
    }
    unreachable!("loop returns at l == 0")
}

/// Per-class training-target matrix (K x K) for a label mode.
pub fn target_matrix(tree: &TaxonomyTree, mode: LabelMode) -> Result<Array2<f64>> {
    let soft = match mode {
        LabelMode::Flat => SoftLabelMatrix::one_hot_rows(tree.num_leaves())?,
        LabelMode::Hierarchical { beta } => SoftLabelMatrix::build(tree, beta)?,
    };
    let k = soft.num_classes();
    Ok(Array2::from_shape_fn((k, k), |(i, j)| soft.row(i)[j]))
}

/// Train with mini-batch SGD + momentum, minimizing the mean soft-target
/// cross-entropy; returns the parameters of the best validation epoch.
/// Deterministic given `config.seed` and a model built from the same seed.
pub fn train(
    model: ClassifierModel,
    train_ds: &LabeledDataset,
    val_ds: &LabeledDataset,
    tree: &TaxonomyTree,
    config: &TrainConfig,
) -> Result<(ClassifierModel, TrainHistory)> {
    if config.learning_rate <= 0.0 {
        return Err(Error::Model("learning rate must be positive".into()));
    }
    if config.epochs == 0 {
        return Err(Error::Model("epochs must be >= 1".into()));
    }
    if train_ds.num_classes() != model.arch.output_dim
        || train_ds.feature_dim() != model.arch.input_dim
    {
        return Err(Error::Model(format!(
            "dataset ({} classes, dim {}) does not match model ({} classes, dim {})",
            train_ds.num_classes(),
            train_ds.feature_dim(),
            model.arch.output_dim,
            model.arch.input_dim
        )));
    }
    let targets = target_matrix(tree, config.label_mode)?;

    let mut model = model;
    let mut velocity_w: Vec<Array2<f64>> = model
        .weights
        .iter()
        .map(|w| Array2::zeros(w.raw_dim()))
        .collect();
    let mut velocity_b: Vec<Array1<f64>> = model
        .biases
        .iter()
        .map(|b| Array1::zeros(b.raw_dim()))
        .collect();

    // Separate shuffle stream so initialization draws stay untouched.
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let n = train_ds.num_samples();
    let batch = config.batch_size.max(1).min(n);

    let mut history = TrainHistory {
        train_loss: Vec::with_capacity(config.epochs),
        val_loss: Vec::with_capacity(config.epochs),
        best_epoch: 0,
    };
    let mut best_val = f64::INFINITY;
    let mut best_params: Option<(Vec<Array2<f64>>, Vec<Array1<f64>>)> = None;

    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..config.epochs {
        for i in (1..n).rev() {
            let j = shuffle_rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let mut xs = Array2::zeros((chunk.len(), train_ds.feature_dim()));
            let mut ts = Array2::zeros((chunk.len(), model.arch.output_dim));
            for (b, &row) in chunk.iter().enumerate() {
                xs.row_mut(b).assign(&train_ds.features().row(row));
                ts.row_mut(b).assign(&targets.row(train_ds.labels()[row]));
            }
            let fwd = model.forward_batch(&xs.view())?;
            for b in 0..chunk.len() {
                epoch_loss += soft_ce_loss(&fwd.probs.row(b), &ts.row(b))?;
            }
            let grads = param_gradient(&model, &xs.view(), &ts.view())?;
            for l in 0..model.weights.len() {
                let step = &grads.weights[l] + &(config.weight_decay * &model.weights[l]);
                velocity_w[l] = config.momentum * &velocity_w[l] - config.learning_rate * &step;
                model.weights[l] = &model.weights[l] + &velocity_w[l];
                velocity_b[l] =
                    config.momentum * &velocity_b[l] - config.learning_rate * &grads.biases[l];
                model.biases[l] = &model.biases[l] + &velocity_b[l];
            }
        }
        let train_loss = epoch_loss / n as f64;
        let val_loss = model.mean_loss(val_ds, &targets)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::Model(format!(
                "training diverged at epoch {} (train {}, val {})",
                epoch, train_loss, val_loss
            )));
        }
        history.train_loss.push(train_loss);
        history.val_loss.push(val_loss);
        if val_loss < best_val {
            best_val = val_loss;
            history.best_epoch = epoch;
            best_params = Some((model.weights.clone(), model.biases.clone()));
        }
    }
    let (w, b) = best_params.expect("at least one epoch ran");
    model.weights = w;
    model.biases = b;
    model.trained = true;
    Ok((model, history))
}

/// Index of the largest element; first wins on exact ties.
pub fn argmax(values: &ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
