//! Detector score functions. Every score follows the same sign convention:
//! higher means more anomalous.
//!
//! MSP negates the maximum softmax probability; the hierarchically
//! consistent variant replaces it with the soft-label-weighted negative
//! log-likelihood at the predicted class. ODIN adds temperature scaling and
//! a signed-gradient input perturbation. DMD scores the minimum Mahalanobis
//! distance of penultimate features to class-conditional Gaussians with a
//! tied covariance.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::classifier::{argmax, input_gradient, soft_ce_loss, softmax_t, ClassifierModel};
use crate::error::{Error, Result};
use crate::linalg::{spd_inverse, stable_sum};
use crate::taxonomy::SoftLabelMatrix;

/// Detector family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Msp,
    Odin,
    Dmd,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Msp => "msp",
            Method::Odin => "odin",
            Method::Dmd => "dmd",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "msp" => Ok(Method::Msp),
            "odin" => Ok(Method::Odin),
            "dmd" => Ok(Method::Dmd),
            other => Err(Error::Score(format!("unknown method '{}'", other))),
        }
    }
}

/// Flat (one-hot) or hierarchy-aware treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Flat,
    Hier,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Flat => "flat",
            Variant::Hier => "hier",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(Variant::Flat),
            "hier" => Ok(Variant::Hier),
            other => Err(Error::Score(format!("unknown variant '{}'", other))),
        }
    }
}

/// One scored sample, as written to the harness score dumps.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub sample_id: String,
    pub method: Method,
    pub variant: Variant,
    pub score: f64,
    pub predicted: usize,
}

/// Negative maximum softmax probability; detection rule is `score > c`.
pub fn msp_score(probs: &ArrayView1<f64>) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::Score("empty probability vector".into()));
    }
    Ok(-probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
}

/// Hierarchically consistent score: the soft-label-weighted negative
/// log-likelihood at the predicted class,
/// `-sum_k soft[argmax probs][k] ln probs_k`.
pub fn hier_score(probs: &ArrayView1<f64>, soft: &SoftLabelMatrix) -> Result<f64> {
    if probs.len() != soft.num_classes() {
        return Err(Error::Score(format!(
            "probs length {} != soft-label classes {}",
            probs.len(),
            soft.num_classes()
        )));
    }
    let predicted = argmax(probs);
    soft_ce_loss(probs, &soft.row(predicted)).map_err(|e| Error::Score(e.to_string()))
}

fn sign_flip(v: f64) -> f64 {
    // sign(-v) with sign(0) = 0.
    if v > 0.0 {
        -1.0
    } else if v < 0.0 {
        1.0
    } else {
        0.0
    }
}

/// ODIN input preprocessing: `x - eps * sign(-grad_x ln f_yhat(x; T))`,
/// with the predicted class taken from the unperturbed input.
pub fn odin_perturb(
    model: &ClassifierModel,
    x: &ArrayView1<f64>,
    t: f64,
    eps: f64,
) -> Result<Array1<f64>> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::Score(format!(
            "perturbation magnitude must be >= 0, got {}",
            eps
        )));
    }
    let fwd = model.forward(x)?;
    let probs_t = softmax_t(&fwd.logits.view(), t)?;
    if eps == 0.0 {
        return Ok(x.to_owned());
    }
    let yhat = argmax(&probs_t.view());
    let grad = input_gradient(model, x, t, yhat)?;
    Ok(x - &(eps * grad.mapv(sign_flip)))
}

/// ODIN score at temperature `t` with perturbation `eps`. The flat variant
/// is the negative maximum of the temperature softmax at the perturbed
/// input; the hier variant scores the perturbed probabilities against the
/// soft label of the class predicted on the original input.
pub fn odin_score(
    model: &ClassifierModel,
    x: &ArrayView1<f64>,
    t: f64,
    eps: f64,
    variant: Variant,
    soft: Option<&SoftLabelMatrix>,
) -> Result<f64> {
    let fwd = model.forward(x)?;
    let probs_t = softmax_t(&fwd.logits.view(), t)?;
    let yhat = argmax(&probs_t.view());
    let perturbed_probs = if eps == 0.0 {
        probs_t
    } else {
        let x_tilde = odin_perturb(model, x, t, eps)?;
        let fwd2 = model.forward(&x_tilde.view())?;
        softmax_t(&fwd2.logits.view(), t)?
    };
    match variant {
        Variant::Flat => msp_score(&perturbed_probs.view()),
        Variant::Hier => {
            let soft = soft
                .ok_or_else(|| Error::Score("hier variant needs a soft-label matrix".into()))?;
            if soft.num_classes() != perturbed_probs.len() {
                return Err(Error::Score("soft-label classes do not match model".into()));
            }
            soft_ce_loss(&perturbed_probs.view(), &soft.row(yhat))
                .map_err(|e| Error::Score(e.to_string()))
        }
    }
}

/// First-order decomposition of the perturbation effect on the
/// hierarchically consistent score: `s(x~) = s(x) + eps*(U1 + U2) + O(eps^2)`
/// with `U1 = -soft[yhat][yhat] * ||grad ln f_yhat||_1` and
/// `U2 = sum_{k != yhat} soft[yhat][k] * sign(-grad ln f_yhat) . grad ln f_k`,
/// all gradients at temperature `t`.
pub fn u1_u2(
    model: &ClassifierModel,
    x: &ArrayView1<f64>,
    t: f64,
    soft: &SoftLabelMatrix,
) -> Result<(f64, f64)> {
    if soft.num_classes() != model.num_classes() {
        return Err(Error::Score("soft-label classes do not match model".into()));
    }
    let fwd = model.forward(x)?;
    let probs_t = softmax_t(&fwd.logits.view(), t)?;
    let yhat = argmax(&probs_t.view());
    let grad_y = input_gradient(model, x, t, yhat)?;
    let sgn = grad_y.mapv(sign_flip);
    let row = soft.row(yhat);
    let u1 = -row[yhat] * grad_y.mapv(f64::abs).sum();
    let mut u2 = 0.0;
    for k in 0..soft.num_classes() {
        if k == yhat {
            continue;
        }
        let grad_k = input_gradient(model, x, t, k)?;
        u2 += row[k] * sgn.dot(&grad_k);
    }
    Ok((u1, u2))
}

/// Lower bound on U2 from the perturbation decomposition:
/// `-sum_{k != yhat} soft[yhat][k] * ||grad ln f_k||_1`.
pub fn u2_lower_bound(
    model: &ClassifierModel,
    x: &ArrayView1<f64>,
    t: f64,
    soft: &SoftLabelMatrix,
) -> Result<f64> {
    let fwd = model.forward(x)?;
    let probs_t = softmax_t(&fwd.logits.view(), t)?;
    let yhat = argmax(&probs_t.view());
    let row = soft.row(yhat);
    let mut bound = 0.0;
    for k in 0..soft.num_classes() {
        if k == yhat {
            continue;
        }
        let grad_k = input_gradient(model, x, t, k)?;
        bound -= row[k] * grad_k.mapv(f64::abs).sum();
    }
    Ok(bound)
}

/// Which labels the Gaussian bank was fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitLabelMode {
    /// True training labels (the default).
    True,
    /// The model's own predictions.
    Predicted,
}

/// Per-class Gaussian means with a tied, ridge-regularized covariance over
/// penultimate features.
#[derive(Debug, Clone)]
pub struct GaussianBank {
    means: Array2<f64>,
    covariance: Array2<f64>,
    precision: Array2<f64>,
    lambda: f64,
    mode: FitLabelMode,
    sample_deficient: bool,
}

impl GaussianBank {
    /// Fit class means and the tied covariance, regularizing with
    /// `lambda = 1e-6 * trace(cov) / H` before inversion.
    pub fn fit(
        features: &ArrayView2<f64>,
        labels: &[usize],
        num_classes: usize,
        mode: FitLabelMode,
    ) -> Result<Self> {
        let (means, cov) = Self::moments(features, labels, num_classes)?;
        let h = features.ncols() as f64;
        let trace: f64 = (0..cov.nrows()).map(|i| cov[(i, i)]).sum();
        // The trace-scaled ridge vanishes for an all-zero covariance (one
        // point per class); fall back to a tiny absolute ridge so the
        // precision stays defined.
        let lambda = if trace > 0.0 { 1e-6 * trace / h } else { 1e-12 };
        Self::assemble(features, means, cov, lambda, mode)
    }

    /// Fit with an explicit ridge (zero keeps the raw covariance).
    pub fn fit_with_ridge(
        features: &ArrayView2<f64>,
        labels: &[usize],
        num_classes: usize,
        mode: FitLabelMode,
        lambda: f64,
    ) -> Result<Self> {
        let (means, cov) = Self::moments(features, labels, num_classes)?;
        Self::assemble(features, means, cov, lambda, mode)
    }

    /// Bank from explicit moments, for hand-constructed cases.
    pub fn from_parts(means: Array2<f64>, covariance: Array2<f64>, lambda: f64) -> Result<Self> {
        let h = means.ncols();
        if covariance.dim() != (h, h) {
            return Err(Error::Score(format!(
                "covariance shape {:?} does not match feature dim {}",
                covariance.dim(),
                h
            )));
        }
        for i in 0..h {
            for j in 0..h {
                if (covariance[(i, j)] - covariance[(j, i)]).abs() > 1e-10 {
                    return Err(Error::Score("covariance not symmetric".into()));
                }
            }
        }
        let mut regularized = covariance.clone();
        for i in 0..h {
            regularized[(i, i)] += lambda;
        }
        let precision = spd_inverse(&regularized)?;
        Ok(GaussianBank {
            means,
            covariance,
            precision,
            lambda,
            mode: FitLabelMode::True,
            sample_deficient: false,
        })
    }

    fn moments(
        features: &ArrayView2<f64>,
        labels: &[usize],
        num_classes: usize,
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        let n = features.nrows();
        let h = features.ncols();
        if h == 0 {
            return Err(Error::Score("feature dimension must be >= 1".into()));
        }
        if labels.len() != n {
            return Err(Error::Score(format!(
                "{} feature rows but {} labels",
                n,
                labels.len()
            )));
        }
        if num_classes == 0 {
            return Err(Error::Score("need at least one class".into()));
        }
        let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
        for (r, &l) in labels.iter().enumerate() {
            if l >= num_classes {
                return Err(Error::Score(format!(
                    "label {} out of range (K={})",
                    l, num_classes
                )));
            }
            per_class[l].push(r);
        }
        if let Some(empty) = per_class.iter().position(|rows| rows.is_empty()) {
            return Err(Error::Score(format!("class {} has no samples", empty)));
        }

        // Class means and the pooled covariance use order-insensitive sums so
        // the fit is bitwise invariant to sample permutations.
        let mut means = Array2::<f64>::zeros((num_classes, h));
        for (c, rows) in per_class.iter().enumerate() {
            for d in 0..h {
                let mut vals: Vec<f64> = rows.iter().map(|&r| features[(r, d)]).collect();
                means[(c, d)] = stable_sum(&mut vals) / rows.len() as f64;
            }
        }
        let mut cov = Array2::<f64>::zeros((h, h));
        for i in 0..h {
            for j in 0..=i {
                let mut vals: Vec<f64> = Vec::with_capacity(n);
                for (c, rows) in per_class.iter().enumerate() {
                    for &r in rows {
                        let di = features[(r, i)] - means[(c, i)];
                        let dj = features[(r, j)] - means[(c, j)];
                        vals.push(di * dj);
                    }
                }
                let v = stable_sum(&mut vals) / n as f64;
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        Ok((means, cov))
    }

    fn assemble(
        features: &ArrayView2<f64>,
        means: Array2<f64>,
        cov: Array2<f64>,
        lambda: f64,
        mode: FitLabelMode,
    ) -> Result<Self> {
        let h = cov.nrows();
        let mut regularized = cov.clone();
        for i in 0..h {
            regularized[(i, i)] += lambda;
        }
        let precision = spd_inverse(&regularized)?;
        Ok(GaussianBank {
            means,
            covariance: cov,
            precision,
            lambda,
            mode,
            sample_deficient: features.nrows() <= h,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.means.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.means.ncols()
    }

    pub fn means(&self) -> &Array2<f64> {
        &self.means
    }

    pub fn covariance(&self) -> &Array2<f64> {
        &self.covariance
    }

    pub fn precision(&self) -> &Array2<f64> {
        &self.precision
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mode(&self) -> FitLabelMode {
        self.mode
    }

    /// Fewer samples than feature dimensions were available at fit time.
    pub fn sample_deficient(&self) -> bool {
        self.sample_deficient
    }

    /// Minimum squared Mahalanobis distance of `g` to any class mean;
    /// detection rule is `score > c`.
    pub fn score(&self, g: &ArrayView1<f64>) -> Result<f64> {
        if g.len() != self.feature_dim() {
            return Err(Error::Score(format!(
                "feature length {} does not match bank dim {}",
                g.len(),
                self.feature_dim()
            )));
        }
        let mut best = f64::INFINITY;
        for c in 0..self.num_classes() {
            let diff = &g.to_owned() - &self.means.row(c);
            let d = diff.dot(&self.precision.dot(&diff));
            if d < best {
                best = d;
            }
        }
        Ok(best)
    }
}
