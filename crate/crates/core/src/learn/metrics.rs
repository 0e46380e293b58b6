//! Detection rate, false positives rate and classification error, plus
//! 95% confidence intervals over replication units.
//!
//! For a class c: detection rate = correct_c / n_c × 100 and
//! FP rate = FP_c / (FP_c + correct_c) × 100, where FP_c counts objects
//! incorrectly predicted as c. The classification error is
//! Σ_c FP_c / Σ_c n_c × 100. A merged binary view (class 0 against
//! everything else) is computed alongside the per-class measures.

use std::fmt::Write as _;

use super::{ClassId, LearnError};

/// Confusion counts indexed `[predicted][actual]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub n_classes: usize,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        ConfusionMatrix {
            n_classes,
            counts: vec![vec![0; n_classes]; n_classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<usize>>) -> Self {
        let n = counts.len();
        for row in &counts {
            assert_eq!(row.len(), n, "confusion matrix must be square");
        }
        ConfusionMatrix { n_classes: n, counts }
    }

    pub fn record(&mut self, predicted: ClassId, actual: ClassId) {
        self.counts[predicted as usize][actual as usize] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().map(|r| r.iter().sum::<usize>()).sum()
    }

    /// Number of objects truly in class c (column sum).
    pub fn actual_count(&self, c: usize) -> usize {
        self.counts.iter().map(|row| row[c]).sum()
    }

    /// Number of objects predicted as c (row sum).
    pub fn predicted_count(&self, c: usize) -> usize {
        self.counts[c].iter().sum()
    }

    pub fn correct(&self, c: usize) -> usize {
        self.counts[c][c]
    }

    /// Objects incorrectly predicted as c.
    pub fn false_positives(&self, c: usize) -> usize {
        self.predicted_count(c) - self.correct(c)
    }
}

/// Measures for one class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub n: usize,
    pub correct: usize,
    pub false_positives: usize,
    /// Percent; `None` when no object of the class exists.
    pub detection_rate: Option<f64>,
    /// Percent; 0 when the class was never predicted.
    pub fp_rate: f64,
}

impl ClassMetrics {
    fn from_counts(n: usize, correct: usize, false_positives: usize) -> Self {
        let detection_rate = if n > 0 {
            Some(correct as f64 / n as f64 * 100.0)
        } else {
            None
        };
        let denom = false_positives + correct;
        let fp_rate = if denom > 0 {
            false_positives as f64 / denom as f64 * 100.0
        } else {
            0.0
        };
        ClassMetrics {
            n,
            correct,
            false_positives,
            detection_rate,
            fp_rate,
        }
    }
}

/// Result of evaluating one prediction set.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<ClassMetrics>,
    /// Percent of all objects misclassified.
    pub classification_error: f64,
    /// All non-zero classes merged into a single "misbehavior" class.
    pub merged: ClassMetrics,
    /// Fraction (0..=1) of truly-class-0 objects that were predicted as any
    /// non-zero class. On misbehavior-free data this equals the fraction of
    /// windows that would trigger a second classification stage.
    pub flagged_normal_fraction: f64,
}

/// Evaluates predictions against ground truth over `n_classes` classes.
pub fn evaluate(
    predictions: &[ClassId],
    truth: &[ClassId],
    n_classes: usize,
) -> Result<Metrics, LearnError> {
    if predictions.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    if predictions.len() != truth.len() {
        return Err(LearnError::LengthMismatch {
            predictions: predictions.len(),
            truth: truth.len(),
        });
    }
    let mut confusion = ConfusionMatrix::new(n_classes);
    for (&p, &t) in predictions.iter().zip(truth) {
        confusion.record(p, t);
    }
    Ok(Metrics::from_confusion(confusion))
}

impl Metrics {
    /// Computes all measures from confusion counts. Usable directly on
    /// published matrices.
    pub fn from_confusion(confusion: ConfusionMatrix) -> Metrics {
        let k = confusion.n_classes;
        let mut per_class = Vec::with_capacity(k);
        let mut total_fp = 0usize;
        let mut total_n = 0usize;
        for c in 0..k {
            let m = ClassMetrics::from_counts(
                confusion.actual_count(c),
                confusion.correct(c),
                confusion.false_positives(c),
            );
            total_fp += m.false_positives;
            total_n += m.n;
            per_class.push(m);
        }
        let classification_error = if total_n > 0 {
            total_fp as f64 / total_n as f64 * 100.0
        } else {
            0.0
        };

        // Merged binary view: predicted/actual collapsed to {0, non-0}.
        let mut mis_correct = 0usize; // truly misbehaving, predicted misbehaving
        let mut mis_fp = 0usize; // truly normal, predicted misbehaving
        let mut mis_n = 0usize;
        let mut normal_n = 0usize;
        for p in 0..k {
            for a in 0..k {
                let count = confusion.counts[p][a];
                if a != 0 {
                    mis_n += count;
                    if p != 0 {
                        mis_correct += count;
                    }
                } else {
                    normal_n += count;
                    if p != 0 {
                        mis_fp += count;
                    }
                }
            }
        }
        let merged = ClassMetrics::from_counts(mis_n, mis_correct, mis_fp);
        let flagged_normal_fraction = if normal_n > 0 {
            mis_fp as f64 / normal_n as f64
        } else {
            0.0
        };
        Metrics {
            confusion,
            per_class,
            classification_error,
            merged,
            flagged_normal_fraction,
        }
    }

    pub fn detection_rate(&self, class: usize) -> Option<f64> {
        self.per_class.get(class).and_then(|m| m.detection_rate)
    }

    pub fn fp_rate(&self, class: usize) -> Option<f64> {
        self.per_class.get(class).map(|m| m.fp_rate)
    }
}

/// Mean and CI95 half-width (normal approximation, 1.96·s/√n with the
/// sample standard deviation).
pub fn ci95(values: &[f64]) -> Result<(f64, f64), LearnError> {
    if values.len() < 2 {
        return Err(LearnError::TooFewValues(values.len()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let hw = 1.96 * var.sqrt() / n.sqrt();
    Ok((mean, hw))
}

/// Aggregate of per-replication-unit metrics (per monitored node or per
/// seed): mean and CI95 per measure.
#[derive(Debug, Clone)]
pub struct MetricsSummary {
    pub n_classes: usize,
    pub units: usize,
    /// Per class: (mean detection rate, hw), over units where defined.
    pub detection: Vec<Option<(f64, f64)>>,
    /// Per class: (mean FP rate, hw).
    pub fp: Vec<Option<(f64, f64)>>,
    pub merged_detection: Option<(f64, f64)>,
    pub merged_fp: Option<(f64, f64)>,
    pub classification_error: Option<(f64, f64)>,
    pub flagged_normal: Option<(f64, f64)>,
}

fn summarize(values: &[f64]) -> Option<(f64, f64)> {
    match values.len() {
        0 => None,
        1 => Some((values[0], 0.0)),
        _ => ci95(values).ok(),
    }
}

impl MetricsSummary {
    pub fn aggregate(per_unit: &[Metrics], n_classes: usize) -> MetricsSummary {
        let mut detection = Vec::with_capacity(n_classes);
        let mut fp = Vec::with_capacity(n_classes);
        for c in 0..n_classes {
            let det: Vec<f64> = per_unit
                .iter()
                .filter_map(|m| m.detection_rate(c))
                .collect();
            let fpr: Vec<f64> = per_unit
                .iter()
                .filter(|m| m.per_class.get(c).is_some_and(|cm| cm.n > 0))
                .filter_map(|m| m.fp_rate(c))
                .collect();
            detection.push(summarize(&det));
            fp.push(summarize(&fpr));
        }
        let md: Vec<f64> = per_unit
            .iter()
            .filter_map(|m| m.merged.detection_rate)
            .collect();
        let mf: Vec<f64> = per_unit
            .iter()
            .filter(|m| m.merged.n > 0)
            .map(|m| m.merged.fp_rate)
            .collect();
        let ce: Vec<f64> = per_unit.iter().map(|m| m.classification_error).collect();
        let fl: Vec<f64> = per_unit.iter().map(|m| m.flagged_normal_fraction).collect();
        MetricsSummary {
            n_classes,
            units: per_unit.len(),
            detection,
            fp,
            merged_detection: summarize(&md),
            merged_fp: summarize(&mf),
            classification_error: summarize(&ce),
            flagged_normal: summarize(&fl),
        }
    }

    /// One formatted table row: per-class then merged `value ±hw` pairs.
    pub fn table_row(&self, which: Measure) -> String {
        let mut out = String::new();
        let cells: Vec<Option<(f64, f64)>> = match which {
            Measure::Detection => {
                let mut v = self.detection.clone();
                v.push(self.merged_detection);
                v
            }
            Measure::FpRate => {
                let mut v = self.fp.clone();
                v.push(self.merged_fp);
                v
            }
        };
        for cell in cells {
            match cell {
                Some((m, hw)) => write!(out, "\t{m:.2}\t{hw:.2}").unwrap(),
                None => write!(out, "\t-\t-").unwrap(),
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Measure {
    Detection,
    FpRate,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let m = evaluate(&[0, 1, 2, 0], &[0, 1, 2, 0], 3).unwrap();
        assert_eq!(m.per_class[0].detection_rate, Some(100.0));
        assert_eq!(m.per_class[1].fp_rate, 0.0);
        assert_eq!(m.classification_error, 0.0);
        assert_eq!(m.merged.detection_rate, Some(100.0));
    }

    #[test]
    fn published_confusion_matrix_counts() {
        // Rows = predicted, columns = actual; class 1 here is "dropping".
        let counts = vec![
            vec![51629, 66, 104, 433],
            vec![47, 10927, 6, 1],
            vec![88, 5, 15847, 9],
            vec![120, 2, 2, 2990],
        ];
        let m = Metrics::from_confusion(ConfusionMatrix::from_counts(counts));
        let det = m.detection_rate(1).unwrap();
        let fp = m.fp_rate(1).unwrap();
        assert!((det - 99.34).abs() < 0.01, "det {det}");
        assert!((fp - 0.49).abs() < 0.01, "fp {fp}");
    }

    #[test]
    fn degenerate_all_predicted_one_class() {
        // 2-class 50/50, everything predicted class 1 (the "A" class here).
        let m = evaluate(&[1, 1, 1, 1], &[1, 1, 0, 0], 2).unwrap();
        assert_eq!(m.per_class[1].detection_rate, Some(100.0));
        assert_eq!(m.per_class[1].fp_rate, 50.0);
        assert_eq!(m.classification_error, 50.0);
    }

    #[test]
    fn rejects_empty_and_mismatched() {
        assert!(matches!(evaluate(&[], &[], 2), Err(LearnError::EmptyDataset)));
        assert!(matches!(
            evaluate(&[0], &[0, 1], 2),
            Err(LearnError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn ci95_constant_values() {
        let (mean, hw) = ci95(&[5.0, 5.0, 5.0]).unwrap();
        assert_eq!(mean, 5.0);
        assert_eq!(hw, 0.0);
    }

    #[test]
    fn ci95_two_point_spread() {
        let (mean, hw) = ci95(&[0.0, 100.0]).unwrap();
        assert_eq!(mean, 50.0);
        // s = 70.7107, hw = 1.96 * 70.7107 / sqrt(2) = 98.0
        assert!((hw - 98.0).abs() < 0.01, "hw {hw}");
    }

    #[test]
    fn ci95_rejects_single_value() {
        assert!(matches!(ci95(&[1.0]), Err(LearnError::TooFewValues(1))));
    }

    #[test]
    fn flagged_normal_fraction_counts_normals_only() {
        // truth: 3 normal, 1 misbehavior; one normal flagged.
        let m = evaluate(&[0, 1, 0, 1], &[0, 0, 0, 1], 2).unwrap();
        assert!((m.flagged_normal_fraction - 1.0 / 3.0).abs() < 1e-12);
    }
}
