//! Stratified n-fold cross-validation splits.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ClassId, LearnError};

#[derive(Debug, Clone)]
pub struct Fold {
    pub train: Vec<usize>,
    pub holdout: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct StratifiedFolds {
    pub folds: Vec<Fold>,
    /// Requested fold count before any shortfall reduction.
    pub requested: usize,
    /// Classes whose population was below the requested fold count.
    pub short_classes: Vec<ClassId>,
}

/// Splits sample indices into stratified folds: per-class counts across
/// folds differ by at most one. Deterministic for a fixed seed.
///
/// If some class has fewer members than `n_folds`, the fold count is
/// reduced to the smallest class population (with a warning); a class
/// smaller than 2 is an error.
pub fn stratified_kfold(
    labels: &[ClassId],
    n_folds: usize,
    seed: u64,
) -> Result<StratifiedFolds, LearnError> {
    if labels.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    if n_folds < 2 {
        return Err(LearnError::TooFewFolds(n_folds));
    }
    let n_classes = labels.iter().copied().max().unwrap() as usize + 1;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l as usize].push(i);
    }

    let mut effective = n_folds;
    let mut short_classes = Vec::new();
    for (c, members) in by_class.iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            return Err(LearnError::ClassTooSmall(c as ClassId));
        }
        if members.len() < n_folds {
            short_classes.push(c as ClassId);
            effective = effective.min(members.len());
        }
    }
    if effective < n_folds {
        log::warn!(
            "stratified_kfold: classes {:?} smaller than {} folds, reducing to {} folds",
            short_classes,
            n_folds,
            effective
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment: Vec<Vec<usize>> = vec![Vec::new(); effective];
    for members in by_class.iter_mut() {
        members.shuffle(&mut rng);
        for (j, &idx) in members.iter().enumerate() {
            assignment[j % effective].push(idx);
        }
    }

    let folds = (0..effective)
        .map(|f| {
            let mut holdout = assignment[f].clone();
            holdout.sort_unstable();
            let mut train: Vec<usize> = assignment
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, v)| v.iter().copied())
                .collect();
            train.sort_unstable();
            Fold { train, holdout }
        })
        .collect();

    Ok(StratifiedFolds {
        folds,
        requested: n_folds,
        short_classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_divisibility_gives_one_of_each_class_per_fold() {
        // 40 samples, 4 classes x 10, n = 10.
        let labels: Vec<ClassId> = (0..40).map(|i| (i % 4) as ClassId).collect();
        let split = stratified_kfold(&labels, 10, 7).unwrap();
        assert_eq!(split.folds.len(), 10);
        for fold in &split.folds {
            assert_eq!(fold.holdout.len(), 4);
            let mut counts = [0usize; 4];
            for &i in &fold.holdout {
                counts[labels[i] as usize] += 1;
            }
            assert_eq!(counts, [1, 1, 1, 1]);
        }
    }

    #[test]
    fn holdouts_partition_the_dataset() {
        let labels: Vec<ClassId> = (0..53).map(|i| (i % 3) as ClassId).collect();
        let split = stratified_kfold(&labels, 5, 3).unwrap();
        let mut seen = vec![false; labels.len()];
        for fold in &split.folds {
            for &i in &fold.holdout {
                assert!(!seen[i], "index {i} in two holdouts");
                seen[i] = true;
            }
            // train = complement of holdout
            assert_eq!(fold.train.len() + fold.holdout.len(), labels.len());
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn unbalanced_counts_differ_by_at_most_one() {
        // 95 samples, 60/35 split, n = 10 -> per-fold counts 6 and {3,4}.
        let mut labels = vec![0 as ClassId; 60];
        labels.extend(vec![1 as ClassId; 35]);
        let split = stratified_kfold(&labels, 10, 11).unwrap();
        for fold in &split.folds {
            let c0 = fold.holdout.iter().filter(|&&i| labels[i] == 0).count();
            let c1 = fold.holdout.iter().filter(|&&i| labels[i] == 1).count();
            assert_eq!(c0, 6);
            assert!(c1 == 3 || c1 == 4, "c1 = {c1}");
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let labels: Vec<ClassId> = (0..30).map(|i| (i % 2) as ClassId).collect();
        let a = stratified_kfold(&labels, 5, 42).unwrap();
        let b = stratified_kfold(&labels, 5, 42).unwrap();
        for (fa, fb) in a.folds.iter().zip(&b.folds) {
            assert_eq!(fa.holdout, fb.holdout);
        }
        let c = stratified_kfold(&labels, 5, 43).unwrap();
        assert!(a.folds.iter().zip(&c.folds).any(|(x, y)| x.holdout != y.holdout));
    }

    #[test]
    fn small_class_reduces_fold_count() {
        let mut labels = vec![0 as ClassId; 20];
        labels.extend(vec![1 as ClassId; 3]);
        let split = stratified_kfold(&labels, 10, 0).unwrap();
        assert_eq!(split.folds.len(), 3);
        assert_eq!(split.short_classes, vec![1]);
    }

    #[test]
    fn singleton_class_is_an_error() {
        let labels = vec![0, 0, 0, 1];
        assert!(matches!(
            stratified_kfold(&labels, 2, 0),
            Err(LearnError::ClassTooSmall(1))
        ));
    }
}
