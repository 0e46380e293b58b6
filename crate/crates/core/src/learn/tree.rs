//! Greedy top-down decision tree induction with the information gain
//! impurity measure.
//!
//! Candidate thresholds are midpoints between consecutive distinct sorted
//! values of a feature. Ties on gain are broken towards the lowest feature
//! index, then the lowest threshold, so induction is fully deterministic.
//! Comparison semantics: `value < threshold` goes to the left child.

use std::fmt::Write as _;

use super::{ClassId, Dataset, LearnError};

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf {
        label: ClassId,
        histogram: Vec<usize>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub root: TreeNode,
    pub n_features: usize,
    pub n_classes: usize,
    pub depth: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    /// Minimum number of training rows in each child of a split.
    pub min_leaf: usize,
    /// Maximum tree depth; `None` for unbounded.
    pub max_depth: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        // Experiment defaults; oracle tests use `unbounded`.
        TreeParams {
            min_leaf: 5,
            max_depth: Some(25),
        }
    }
}

impl TreeParams {
    pub fn unbounded() -> Self {
        TreeParams {
            min_leaf: 1,
            max_depth: None,
        }
    }
}

/// Shannon entropy in bits of a class histogram.
fn entropy_of_counts(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    let mut h = 0.0;
    for &c in counts {
        if c > 0 {
            let p = c as f64 / n;
            h -= p * p.log2();
        }
    }
    h
}

fn count_labels(labels: &[ClassId]) -> Vec<usize> {
    let max = labels.iter().copied().max().unwrap_or(0) as usize;
    let mut counts = vec![0usize; max + 1];
    for &l in labels {
        counts[l as usize] += 1;
    }
    counts
}

/// Shannon entropy in bits of a label slice.
pub fn entropy(labels: &[ClassId]) -> f64 {
    entropy_of_counts(&count_labels(labels), labels.len())
}

/// Information gain in bits of splitting `parent_labels` into the two
/// given children: `H(parent) - (|L|/|P|·H(L) + |R|/|P|·H(R))`.
///
/// The children must be non-empty and partition the parent multiset.
pub fn information_gain(
    parent_labels: &[ClassId],
    left_labels: &[ClassId],
    right_labels: &[ClassId],
) -> Result<f64, LearnError> {
    if left_labels.is_empty() || right_labels.is_empty() {
        return Err(LearnError::EmptyChild);
    }
    if left_labels.len() + right_labels.len() != parent_labels.len() {
        return Err(LearnError::PartitionMismatch);
    }
    let parent = count_labels(parent_labels);
    let mut left = count_labels(left_labels);
    let mut right = count_labels(right_labels);
    left.resize(parent.len().max(left.len()), 0);
    right.resize(parent.len().max(right.len()), 0);
    for (i, &p) in parent.iter().enumerate() {
        if left[i] + right[i] != p {
            return Err(LearnError::PartitionMismatch);
        }
    }
    let n = parent_labels.len() as f64;
    let h_parent = entropy_of_counts(&parent, parent_labels.len());
    let h_left = entropy_of_counts(&left, left_labels.len());
    let h_right = entropy_of_counts(&right, right_labels.len());
    let weighted =
        left_labels.len() as f64 / n * h_left + right_labels.len() as f64 / n * h_right;
    Ok(h_parent - weighted)
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Finds the best (feature, threshold) split of `indices` among the
/// `active_features`, or `None` if no valid split has positive gain.
fn best_split(
    data: &Dataset,
    indices: &[usize],
    active_features: &[usize],
    min_leaf: usize,
    n_classes: usize,
) -> Option<BestSplit> {
    let n = indices.len();
    if n < 2 * min_leaf {
        return None;
    }
    let mut parent_counts = vec![0usize; n_classes];
    for &i in indices {
        parent_counts[data.labels[i] as usize] += 1;
    }
    let h_parent = entropy_of_counts(&parent_counts, n);
    if h_parent == 0.0 {
        return None;
    }

    let mut best: Option<BestSplit> = None;
    let mut sorted: Vec<usize> = Vec::with_capacity(n);
    for &feature in active_features {
        sorted.clear();
        sorted.extend_from_slice(indices);
        sorted.sort_by(|&a, &b| {
            data.rows[a][feature]
                .partial_cmp(&data.rows[b][feature])
                .unwrap()
                .then(a.cmp(&b))
        });

        let mut left_counts = vec![0usize; n_classes];
        let mut left_n = 0usize;
        for k in 0..n - 1 {
            let idx = sorted[k];
            left_counts[data.labels[idx] as usize] += 1;
            left_n += 1;
            let v = data.rows[idx][feature];
            let v_next = data.rows[sorted[k + 1]][feature];
            if v == v_next {
                continue;
            }
            if left_n < min_leaf || n - left_n < min_leaf {
                continue;
            }
            let threshold = v + (v_next - v) / 2.0;
            // Midpoint can collapse onto an endpoint for adjacent floats;
            // such a threshold would not separate the two rows.
            if threshold <= v || threshold > v_next {
                continue;
            }
            let h_left = entropy_of_counts(&left_counts, left_n);
            let mut right_counts = vec![0usize; n_classes];
            for (c, rc) in right_counts.iter_mut().enumerate() {
                *rc = parent_counts[c] - left_counts[c];
            }
            let right_n = n - left_n;
            let h_right = entropy_of_counts(&right_counts, right_n);
            let gain = h_parent
                - (left_n as f64 / n as f64) * h_left
                - (right_n as f64 / n as f64) * h_right;
            if gain <= 0.0 {
                continue;
            }
            let better = match &best {
                None => true,
                Some(b) => {
                    gain > b.gain
                        || (gain == b.gain
                            && (feature < b.feature
                                || (feature == b.feature && threshold < b.threshold)))
                }
            };
            if better {
                best = Some(BestSplit {
                    feature,
                    threshold,
                    gain,
                });
            }
        }
    }
    best
}

fn majority_label(counts: &[usize]) -> ClassId {
    let mut best = 0usize;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best as ClassId
}

fn grow(
    data: &Dataset,
    indices: &[usize],
    active_features: &[usize],
    params: &TreeParams,
    depth: usize,
    max_seen: &mut usize,
    n_classes: usize,
) -> TreeNode {
    *max_seen = (*max_seen).max(depth);
    let mut counts = vec![0usize; n_classes];
    for &i in indices {
        counts[data.labels[i] as usize] += 1;
    }
    let depth_capped = params.max_depth.is_some_and(|d| depth >= d);
    if !depth_capped {
        if let Some(split) = best_split(data, indices, active_features, params.min_leaf, n_classes)
        {
            let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
                .iter()
                .partition(|&&i| data.rows[i][split.feature] < split.threshold);
            let left = grow(
                data,
                &left_idx,
                active_features,
                params,
                depth + 1,
                max_seen,
                n_classes,
            );
            let right = grow(
                data,
                &right_idx,
                active_features,
                params,
                depth + 1,
                max_seen,
                n_classes,
            );
            return TreeNode::Split {
                feature: split.feature,
                threshold: split.threshold,
                left: Box::new(left),
                right: Box::new(right),
            };
        }
    }
    TreeNode::Leaf {
        label: majority_label(&counts),
        histogram: counts,
    }
}

/// Trains a tree on the full dataset.
pub fn train_tree(data: &Dataset, params: &TreeParams) -> Result<DecisionTree, LearnError> {
    let indices: Vec<usize> = (0..data.len()).collect();
    let active: Vec<usize> = (0..data.n_features()).collect();
    train_tree_on(data, &indices, &active, params)
}

/// Trains a tree on a row subset, restricted to `active_features`.
/// Fold training and wrapper feature selection both go through here.
pub fn train_tree_on(
    data: &Dataset,
    indices: &[usize],
    active_features: &[usize],
    params: &TreeParams,
) -> Result<DecisionTree, LearnError> {
    data.validate()?;
    if indices.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    if active_features.is_empty() {
        return Err(LearnError::NoFeatures);
    }
    let n_classes = data.n_classes().max(
        data.labels.iter().copied().max().unwrap_or(0) as usize + 1,
    );
    let mut max_seen = 0usize;
    let root = grow(
        data,
        indices,
        active_features,
        params,
        0,
        &mut max_seen,
        n_classes,
    );
    Ok(DecisionTree {
        root,
        n_features: data.n_features(),
        n_classes,
        depth: max_seen,
    })
}

/// Classifies one vector by deterministic leaf lookup.
pub fn classify(tree: &DecisionTree, vector: &[f64]) -> Result<ClassId, LearnError> {
    if vector.len() != tree.n_features {
        return Err(LearnError::DimensionMismatch {
            expected: tree.n_features,
            got: vector.len(),
        });
    }
    let mut node = &tree.root;
    loop {
        match node {
            TreeNode::Leaf { label, .. } => return Ok(*label),
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                node = if vector[*feature] < *threshold {
                    left
                } else {
                    right
                };
            }
        }
    }
}

impl DecisionTree {
    pub fn predict(&self, vector: &[f64]) -> Result<ClassId, LearnError> {
        classify(self, vector)
    }

    /// Fraction of rows misclassified, in percent.
    pub fn training_error(&self, data: &Dataset) -> Result<f64, LearnError> {
        let mut wrong = 0usize;
        for (row, &label) in data.rows.iter().zip(&data.labels) {
            if self.predict(row)? != label {
                wrong += 1;
            }
        }
        Ok(wrong as f64 / data.len() as f64 * 100.0)
    }

    /// Textual serialization: preorder, one node per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "tree n_features={} n_classes={} depth={}",
            self.n_features, self.n_classes, self.depth
        )
        .unwrap();
        fn rec(node: &TreeNode, out: &mut String) {
            match node {
                TreeNode::Leaf { label, histogram } => {
                    let hist: Vec<String> = histogram.iter().map(|c| c.to_string()).collect();
                    writeln!(out, "leaf {} {}", label, hist.join(",")).unwrap();
                }
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    writeln!(out, "split {} {:.17e}", feature, threshold).unwrap();
                    rec(left, out);
                    rec(right, out);
                }
            }
        }
        rec(&self.root, &mut out);
        out
    }

    pub fn from_text(text: &str) -> Result<DecisionTree, LearnError> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| LearnError::ModelParse("empty model".into()))?;
        let mut n_features = None;
        let mut n_classes = None;
        let mut depth = None;
        for part in header.split_whitespace().skip(1) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| LearnError::ModelParse(format!("bad header field {part}")))?;
            let v: usize = v
                .parse()
                .map_err(|_| LearnError::ModelParse(format!("bad header value {part}")))?;
            match k {
                "n_features" => n_features = Some(v),
                "n_classes" => n_classes = Some(v),
                "depth" => depth = Some(v),
                _ => return Err(LearnError::ModelParse(format!("unknown header key {k}"))),
            }
        }
        fn rec<'a, I: Iterator<Item = &'a str>>(lines: &mut I) -> Result<TreeNode, LearnError> {
            let line = lines
                .next()
                .ok_or_else(|| LearnError::ModelParse("truncated model".into()))?;
            let mut parts = lines_split(line);
            match parts.next() {
                Some("leaf") => {
                    let label: ClassId = parse_field(parts.next(), "leaf label")?;
                    let hist_str = parts.next().unwrap_or("");
                    let histogram = hist_str
                        .split(',')
                        .filter(|s| !s.is_empty())
                        .map(|s| {
                            s.parse::<usize>()
                                .map_err(|_| LearnError::ModelParse(format!("bad count {s}")))
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    Ok(TreeNode::Leaf { label, histogram })
                }
                Some("split") => {
                    let feature: usize = parse_field(parts.next(), "split feature")?;
                    let threshold: f64 = parse_field(parts.next(), "split threshold")?;
                    let left = rec(lines)?;
                    let right = rec(lines)?;
                    Ok(TreeNode::Split {
                        feature,
                        threshold,
                        left: Box::new(left),
                        right: Box::new(right),
                    })
                }
                other => Err(LearnError::ModelParse(format!("unknown node {other:?}"))),
            }
        }
        let root = rec(&mut lines)?;
        Ok(DecisionTree {
            root,
            n_features: n_features
                .ok_or_else(|| LearnError::ModelParse("missing n_features".into()))?,
            n_classes: n_classes
                .ok_or_else(|| LearnError::ModelParse("missing n_classes".into()))?,
            depth: depth.ok_or_else(|| LearnError::ModelParse("missing depth".into()))?,
        })
    }
}

fn lines_split(line: &str) -> impl Iterator<Item = &str> {
    line.split_whitespace()
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, what: &str) -> Result<T, LearnError> {
    field
        .ok_or_else(|| LearnError::ModelParse(format!("missing {what}")))?
        .parse::<T>()
        .map_err(|_| LearnError::ModelParse(format!("bad {what}")))
}
