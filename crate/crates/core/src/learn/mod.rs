//! Decision-tree induction, cross-validation, forward feature selection
//! and classification performance measures.

mod kfold;
mod metrics;
mod selection;
mod tree;

pub use kfold::{stratified_kfold, Fold, StratifiedFolds};
pub use metrics::{ci95, evaluate, ClassMetrics, ConfusionMatrix, Metrics, MetricsSummary};
pub use selection::{ensemble_weights, forward_selection, FeatureWeights, SelectionResult};
pub use tree::{
    classify, entropy, information_gain, train_tree, train_tree_on, DecisionTree, TreeParams,
};

use thiserror::Error;

/// Class label as a dense index; by convention class `0` is "normal" and
/// all higher classes are misbehavior classes.
pub type ClassId = u32;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset has no features")]
    NoFeatures,
    #[error("empty child partition in information gain")]
    EmptyChild,
    #[error("child partitions do not form the parent multiset")]
    PartitionMismatch,
    #[error("vector has {got} entries, classifier expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("prediction and truth lengths differ ({predictions} vs {truth})")]
    LengthMismatch { predictions: usize, truth: usize },
    #[error("need at least 2 values for a confidence interval, got {0}")]
    TooFewValues(usize),
    #[error("need at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("class {0} has fewer than 2 members, cannot stratify")]
    ClassTooSmall(ClassId),
    #[error("row {row} has {got} features, dataset declares {expected}")]
    RaggedRow { row: usize, expected: usize, got: usize },
    #[error("malformed model file: {0}")]
    ModelParse(String),
}

/// In-memory training/evaluation table. Rows are feature vectors, labels
/// are dense class ids (`0..n_classes`).
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<ClassId>,
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, class_names: Vec<String>) -> Self {
        Dataset {
            feature_names,
            rows: Vec::new(),
            labels: Vec::new(),
            class_names,
        }
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: Vec<f64>, label: ClassId) {
        debug_assert_eq!(row.len(), self.n_features());
        self.rows.push(row);
        self.labels.push(label);
    }

    /// Checks rectangular shape and label range.
    pub fn validate(&self) -> Result<(), LearnError> {
        if self.rows.is_empty() {
            return Err(LearnError::EmptyDataset);
        }
        if self.feature_names.is_empty() {
            return Err(LearnError::NoFeatures);
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.n_features() {
                return Err(LearnError::RaggedRow {
                    row: i,
                    expected: self.n_features(),
                    got: row.len(),
                });
            }
        }
        Ok(())
    }

    /// Per-class sample counts.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_classes()];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }
}
