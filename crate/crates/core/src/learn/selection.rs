//! Wrapper-based forward feature selection.
//!
//! Starts from the empty set; each round cross-validates every unselected
//! feature added to the current set and keeps the one that lowers the
//! residual classification error the most. Stops as soon as no candidate
//! strictly lowers it. Ties break towards the lowest feature index.

use super::tree::{train_tree_on, TreeParams};
use super::{stratified_kfold, ClassId, Dataset, LearnError, StratifiedFolds};

/// Per-feature weights in `[0, 1]`.
pub type FeatureWeights = Vec<f64>;

#[derive(Debug, Clone)]
pub struct SelectionResult {
    /// Selected feature indices in selection order.
    pub selected: Vec<usize>,
    /// Indicator weights for this dataset: 1.0 if selected else 0.0.
    /// Averaging these over the monitored-node ensemble yields the
    /// reported weight vector.
    pub weights: FeatureWeights,
    /// Cross-validated classification error (percent) of the final set;
    /// the majority-class baseline if nothing was selected.
    pub residual_error: f64,
    /// Error after each accepted round, starting with the baseline.
    pub error_path: Vec<f64>,
}

/// Pooled cross-validated classification error (percent) of a tree
/// restricted to `features`, using precomputed folds.
pub fn cv_error(
    data: &Dataset,
    features: &[usize],
    folds: &StratifiedFolds,
    params: &TreeParams,
) -> Result<f64, LearnError> {
    let mut wrong = 0usize;
    let mut total = 0usize;
    for fold in &folds.folds {
        let tree = train_tree_on(data, &fold.train, features, params)?;
        for &i in &fold.holdout {
            if tree.predict(&data.rows[i])? != data.labels[i] {
                wrong += 1;
            }
            total += 1;
        }
    }
    Ok(wrong as f64 / total as f64 * 100.0)
}

fn majority_baseline_error(labels: &[ClassId]) -> f64 {
    let mut counts = std::collections::BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_insert(0usize) += 1;
    }
    let max = counts.values().copied().max().unwrap_or(0);
    (labels.len() - max) as f64 / labels.len() as f64 * 100.0
}

/// Greedy forward selection over all dataset features.
pub fn forward_selection(
    data: &Dataset,
    params: &TreeParams,
    n_folds: usize,
    seed: u64,
) -> Result<SelectionResult, LearnError> {
    data.validate()?;
    let folds = stratified_kfold(&data.labels, n_folds, seed)?;
    let n_features = data.n_features();

    let mut selected: Vec<usize> = Vec::new();
    let mut residual = majority_baseline_error(&data.labels);
    let mut error_path = vec![residual];

    loop {
        let mut best: Option<(usize, f64)> = None;
        for f in 0..n_features {
            if selected.contains(&f) {
                continue;
            }
            let mut candidate = selected.clone();
            candidate.push(f);
            candidate.sort_unstable();
            let err = cv_error(data, &candidate, &folds, params)?;
            let better = match best {
                None => true,
                Some((_, be)) => err < be,
            };
            if better {
                best = Some((f, err));
            }
        }
        match best {
            Some((f, err)) if err < residual => {
                selected.push(f);
                residual = err;
                error_path.push(err);
            }
            _ => break,
        }
        if selected.len() == n_features {
            break;
        }
    }

    let mut weights = vec![0.0; n_features];
    for &f in &selected {
        weights[f] = 1.0;
    }
    Ok(SelectionResult {
        selected,
        weights,
        residual_error: residual,
        error_path,
    })
}

/// Averages per-node indicator weight vectors into the ensemble weight
/// vector (fraction of nodes whose selection included each feature).
pub fn ensemble_weights(per_node: &[FeatureWeights]) -> FeatureWeights {
    if per_node.is_empty() {
        return Vec::new();
    }
    let n_features = per_node[0].len();
    let mut avg = vec![0.0; n_features];
    for w in per_node {
        assert_eq!(w.len(), n_features);
        for (a, &v) in avg.iter_mut().zip(w) {
            *a += v;
        }
    }
    for a in &mut avg {
        *a /= per_node.len() as f64;
    }
    avg
}
