//! Threshold calibration, AUROC, score standardization, and diagnostics
//! (rank-distance curves and U1/U2 population summaries).


use crate::classifier::ClassifierModel;
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::scores::{u1_u2, u2_lower_bound};
use crate::taxonomy::{SoftLabelMatrix, TaxonomyTree};

/// Probability that a random novel score exceeds a random known score, with
/// ties counted half. Computed from the Mann-Whitney rank statistic.
pub fn auroc(known_scores: &[f64], novel_scores: &[f64]) -> Result<f64> {
    if known_scores.is_empty() || novel_scores.is_empty() {
        return Err(Error::Evaluation("auroc needs nonempty score lists".into()));
    }
    let n_known = known_scores.len();
    let n_novel = novel_scores.len();
    let mut combined: Vec<(f64, bool)> = known_scores
        .iter()
        .map(|&s| (s, false))
        .chain(novel_scores.iter().map(|&s| (s, true)))
        .collect();
    if combined.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::Evaluation("NaN score".into()));
    }
    combined.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Average ranks over tie groups, then sum ranks of the novel population.
    let mut rank_sum_novel = 0.0;
    let mut i = 0;
    while i < combined.len() {
        let mut j = i;
        while j < combined.len() && combined[j].0 == combined[i].0 {
            j += 1;
        }
        // 1-based ranks i+1 ..= j averaged.
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for item in &combined[i..j] {
            if item.1 {
                rank_sum_novel += avg_rank;
            }
        }
        i = j;
    }
    let u = rank_sum_novel - (n_novel * (n_novel + 1)) as f64 / 2.0;
    Ok(u / (n_known as f64 * n_novel as f64))
}

/// Nearest-rank empirical percentile: the `ceil(q * n)`-th smallest value,
/// `q` in (0, 1].
pub fn percentile_nearest_rank(scores: &[f64], q: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Evaluation("percentile of empty list".into()));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Evaluation(format!("percentile q={} outside (0, 1]", q)));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let idx = (q * sorted.len() as f64).ceil() as usize;
    Ok(sorted[idx.clamp(1, sorted.len()) - 1])
}

/// Outcome of the iterative threshold calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub threshold: f64,
    pub alpha: f64,
    pub iterations: usize,
    pub removed: usize,
}

/// Calibrate the detection threshold on validation scores: take the
/// (1 - alpha) nearest-rank percentile as c, drop scores above c, and repeat
/// until an iteration removes nothing (capped at 100 iterations).
pub fn calibrate_threshold(val_scores: &[f64], alpha: f64) -> Result<CalibrationResult> {
    if val_scores.is_empty() {
        return Err(Error::Evaluation("calibration needs nonempty scores".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Evaluation(format!(
            "alpha must lie strictly between 0 and 1, got {}",
            alpha
        )));
    }
    let mut current = val_scores.to_vec();
    let mut removed_total = 0;
    let mut iterations = 0;
    let mut threshold = f64::NAN;
    while iterations < 100 {
        iterations += 1;
        threshold = percentile_nearest_rank(&current, 1.0 - alpha)?;
        let keep: Vec<f64> = current.iter().copied().filter(|&s| s <= threshold).collect();
        let removed = current.len() - keep.len();
        if removed == 0 {
            break;
        }
        removed_total += removed;
        current = keep;
        if current.is_empty() {
            return Err(Error::Evaluation("calibration removed every sample".into()));
        }
    }
    Ok(CalibrationResult {
        threshold,
        alpha,
        iterations,
        removed: removed_total,
    })
}

/// Shift and scale scores by the validation moments.
pub fn standardize_scores(scores: &[f64], val_mean: f64, val_std: f64) -> Result<Vec<f64>> {
    if !(val_std > 0.0) || !val_std.is_finite() {
        return Err(Error::Evaluation(format!(
            "standard deviation must be positive, got {}",
            val_std
        )));
    }
    Ok(scores.iter().map(|&s| (s - val_mean) / val_std).collect())
}

/// Sample mean and standard deviation (n-1 denominator).
pub fn mean_std(scores: &[f64]) -> Result<(f64, f64)> {
    if scores.len() < 2 {
        return Err(Error::Evaluation("need at least 2 scores for mean/std".into()));
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|&s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}

/// Mean and 95% confidence half-width (normal approximation) of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationStat {
    pub mean: f64,
    pub ci_half_width: f64,
    pub n: usize,
}

fn population_stat(values: &[f64]) -> PopulationStat {
    let n = values.len();
    if n == 0 {
        return PopulationStat {
            mean: f64::NAN,
            ci_half_width: f64::NAN,
            n: 0,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ci = if n < 2 {
        0.0
    } else {
        let var =
            values.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
        1.96 * var.sqrt() / (n as f64).sqrt()
    };
    PopulationStat {
        mean,
        ci_half_width: ci,
        n,
    }
}

/// Mean LCA distance between the top prediction and the class at each
/// lower rank, aggregated separately over known and novel samples. The rank
/// axis starts at 2; rank 1 is the prediction itself at distance zero.
#[derive(Debug, Clone)]
pub struct RankDistanceCurve {
    pub ranks: Vec<usize>,
    pub known: Vec<PopulationStat>,
    pub novel: Vec<PopulationStat>,
}

/// Taxonomy distances from the top-probability class to the class at every
/// lower rank: element r-2 is the distance at rank r. Ties break by class
/// index.
pub fn rank_distances(probs: &ndarray::ArrayView1<f64>, tree: &TaxonomyTree) -> Result<Vec<f64>> {
    let k = tree.num_leaves();
    if probs.len() != k {
        return Err(Error::Evaluation(format!(
            "probs length {} != {} leaves",
            probs.len(),
            k
        )));
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let top = order[0];
    order[1..]
        .iter()
        .map(|&class| tree.lca_distance(class, top))
        .collect()
}

/// Build the rank-distance diagnostic: per sample, sort class probabilities
/// descending and record the taxonomy distance from the top class to the
/// class at every rank r >= 2.
pub fn rank_distance_curve(
    model: &ClassifierModel,
    known: &LabeledDataset,
    novel: &LabeledDataset,
    tree: &TaxonomyTree,
) -> Result<RankDistanceCurve> {
    let k = tree.num_leaves();
    if k < 2 {
        return Err(Error::Evaluation("rank-distance curve needs K >= 2".into()));
    }
    if model.num_classes() != k {
        return Err(Error::Evaluation(format!(
            "model has {} classes but tree has {} leaves",
            model.num_classes(),
            k
        )));
    }
    let mut known_dists: Vec<Vec<f64>> = vec![Vec::new(); k - 1];
    let mut novel_dists: Vec<Vec<f64>> = vec![Vec::new(); k - 1];
    for (ds, sink) in [(known, &mut known_dists), (novel, &mut novel_dists)] {
        for r in 0..ds.num_samples() {
            let probs = model.forward(&ds.features().row(r))?.probs;
            for (rank_idx, d) in rank_distances(&probs.view(), tree)?.into_iter().enumerate() {
                sink[rank_idx].push(d);
            }
        }
    }
    Ok(RankDistanceCurve {
        ranks: (2..=k).collect(),
        known: known_dists.iter().map(|v| population_stat(v)).collect(),
        novel: novel_dists.iter().map(|v| population_stat(v)).collect(),
    })
}

/// Population summaries of the U1/U2 perturbation decomposition terms.
#[derive(Debug, Clone)]
pub struct U1U2Summary {
    pub known_u1: PopulationStat,
    pub known_u2: PopulationStat,
    pub novel_u1: PopulationStat,
    pub novel_u2: PopulationStat,
    /// Count of bound violations observed (zero unless something is wrong).
    pub bound_violations: usize,
}

/// Summarize U1 and U2 over known and novel samples at temperature `t`.
pub fn u1u2_summary(
    model: &ClassifierModel,
    known: &LabeledDataset,
    novel: &LabeledDataset,
    t: f64,
    soft: &SoftLabelMatrix,
) -> Result<U1U2Summary> {
    if known.num_samples() == 0 || novel.num_samples() == 0 {
        return Err(Error::Evaluation(
            "u1/u2 summary needs nonempty known and novel sets".into(),
        ));
    }
    let mut bound_violations = 0;
    let mut collect = |ds: &LabeledDataset| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut u1s = Vec::with_capacity(ds.num_samples());
        let mut u2s = Vec::with_capacity(ds.num_samples());
        for r in 0..ds.num_samples() {
            let x = ds.features().row(r);
            let (u1, u2) = u1_u2(model, &x, t, soft)?;
            if u2 < u2_lower_bound(model, &x, t, soft)? - 1e-12 {
                bound_violations += 1;
            }
            u1s.push(u1);
            u2s.push(u2);
        }
        Ok((u1s, u2s))
    };
    let (known_u1, known_u2) = collect(known)?;
    let (novel_u1, novel_u2) = collect(novel)?;
    Ok(U1U2Summary {
        known_u1: population_stat(&known_u1),
        known_u2: population_stat(&known_u2),
        novel_u1: population_stat(&novel_u1),
        novel_u2: population_stat(&novel_u2),
        bound_violations,
    })
}
