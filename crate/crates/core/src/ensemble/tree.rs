//! Array-encoded binary trees and the two exact greedy split searches.
//!
//! Split contract shared by both trainers:
//! - candidate thresholds are midpoints of consecutive distinct sorted values;
//! - a row goes left when `x < threshold`, right when `x >= threshold`;
//! - features are scanned in ascending index order and thresholds in
//!   ascending order, and a candidate replaces the incumbent only if it is
//!   strictly better beyond a relative tolerance of 1e-12, so ties resolve to
//!   the lowest feature index, then the lowest threshold.

use serde::{Deserialize, Serialize};

use super::ModelError;

const TIE_REL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LeafValue {
    /// `[P(bad), P(good)]` for forest trees.
    Probabilities([f64; 2]),
    /// Additive logit contribution for boosted trees (before learning rate).
    Score(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: LeafValue,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    /// Root at index 0; children always follow their parent.
    pub nodes: Vec<Node>,
    pub max_depth_reached: usize,
}

impl DecisionTree {
    pub fn leaf(&self, x: &[f64]) -> &LeafValue {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] < *threshold { *left } else { *right },
            }
        }
    }

    /// Checks the array encodes a proper binary tree over `n_features`.
    pub fn validate(&self, n_features: usize) -> Result<(), ModelError> {
        let corrupt = |msg: String| Err(ModelError::CorruptModel(msg));
        if self.nodes.is_empty() {
            return corrupt("tree without nodes".into());
        }
        let mut parents = vec![0usize; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            if let Node::Split {
                feature,
                threshold,
                left,
                right,
            } = node
            {
                if *feature >= n_features {
                    return corrupt(format!("node {i}: feature {feature} >= {n_features}"));
                }
                if !threshold.is_finite() {
                    return corrupt(format!("node {i}: non-finite threshold"));
                }
                for &child in [left, right] {
                    if child <= i || child >= self.nodes.len() {
                        return corrupt(format!("node {i}: bad child index {child}"));
                    }
                    parents[child] += 1;
                }
            }
        }
        if parents[0] != 0 || parents[1..].iter().any(|&p| p != 1) {
            return corrupt("nodes are not a single binary tree".into());
        }
        Ok(())
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }
}

/// Column-major training matrix.
#[derive(Debug, Clone)]
pub struct Dataset {
    cols: Vec<Vec<f64>>,
    n_rows: usize,
}

impl Dataset {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, ModelError> {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut cols = vec![Vec::with_capacity(rows.len()); n_cols];
        for (r, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(ModelError::DimensionMismatch {
                    expected: n_cols,
                    found: row.len(),
                });
            }
            for (c, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(ModelError::NonFiniteInput { row: r, feature: c });
                }
                cols[c].push(v);
            }
        }
        Ok(Self {
            cols,
            n_rows: rows.len(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.cols.len()
    }

    pub fn column(&self, feature: usize) -> &[f64] {
        &self.cols[feature]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    /// Criterion value: weighted Gini decrease or Newton gain.
    pub score: f64,
}

/// Threshold between two consecutive distinct values, guaranteed to send
/// `lo` left and `hi` right.
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = (lo + hi) / 2.0;
    if lo < mid && mid <= hi {
        mid
    } else {
        hi
    }
}

pub(crate) fn strictly_better(score: f64, incumbent: Option<&SplitCandidate>) -> bool {
    match incumbent {
        None => true,
        Some(best) => score > best.score + TIE_REL * best.score.abs().max(score.abs()).max(1.0),
    }
}

fn sorted_by_feature(col: &[f64], samples: &[usize]) -> Vec<usize> {
    let mut order = samples.to_vec();
    order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
    order
}

/// Weighted Gini decrease `n*G(parent) - nL*G(left) - nR*G(right)`, which for
/// two classes reduces to `(l0²+l1²)/nL + (r0²+r1²)/nR - (c0²+c1²)/n`.
pub fn gini_decrease(left: [u64; 2], right: [u64; 2]) -> f64 {
    let sq = |c: [u64; 2]| (c[0] * c[0] + c[1] * c[1]) as f64 / (c[0] + c[1]) as f64;
    let parent = [left[0] + right[0], left[1] + right[1]];
    sq(left) + sq(right) - sq(parent)
}

/// Best Gini split over `features` for the (possibly repeated) `samples`.
/// `y[i]` is 1 for Good, 0 for Bad. `features` are scanned in ascending order.
pub fn best_gini_split(
    data: &Dataset,
    y: &[u8],
    samples: &[usize],
    features: &[usize],
) -> Option<SplitCandidate> {
    let mut features = features.to_vec();
    features.sort_unstable();
    let mut total = [0u64; 2];
    for &s in samples {
        total[y[s] as usize] += 1;
    }

    let mut best: Option<SplitCandidate> = None;
    for &f in &features {
        let col = data.column(f);
        let order = sorted_by_feature(col, samples);
        let mut left = [0u64; 2];
        for pos in 0..order.len().saturating_sub(1) {
            left[y[order[pos]] as usize] += 1;
            let (lo, hi) = (col[order[pos]], col[order[pos + 1]]);
            if lo < hi {
                let right = [total[0] - left[0], total[1] - left[1]];
                let score = gini_decrease(left, right);
                if strictly_better(score, best.as_ref()) {
                    best = Some(SplitCandidate {
                        feature: f,
                        threshold: midpoint(lo, hi),
                        score,
                    });
                }
            }
        }
    }
    best
}

/// Regularization and constraints of the Newton split search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonRule {
    pub lambda: f64,
    pub gamma: f64,
    pub min_child_weight: f64,
}

impl NewtonRule {
    pub fn leaf_value(&self, g: f64, h: f64) -> f64 {
        -g / (h + self.lambda)
    }

    /// `0.5 * [GL²/(HL+λ) + GR²/(HR+λ) - G²/(H+λ)] - γ`.
    pub fn gain(&self, gl: f64, hl: f64, gr: f64, hr: f64) -> f64 {
        let term = |g: f64, h: f64| g * g / (h + self.lambda);
        0.5 * (term(gl, hl) + term(gr, hr) - term(gl + gr, hl + hr)) - self.gamma
    }
}

/// Best Newton split over all `features`; children must each carry at least
/// `min_child_weight` hessian.
pub fn best_newton_split(
    data: &Dataset,
    grad: &[f64],
    hess: &[f64],
    samples: &[usize],
    features: &[usize],
    rule: &NewtonRule,
) -> Option<SplitCandidate> {
    let mut features = features.to_vec();
    features.sort_unstable();
    let g_total: f64 = samples.iter().map(|&s| grad[s]).sum();
    let h_total: f64 = samples.iter().map(|&s| hess[s]).sum();

    let mut best: Option<SplitCandidate> = None;
    for &f in &features {
        let col = data.column(f);
        let order = sorted_by_feature(col, samples);
        let (mut gl, mut hl) = (0.0, 0.0);
        for pos in 0..order.len().saturating_sub(1) {
            gl += grad[order[pos]];
            hl += hess[order[pos]];
            let (lo, hi) = (col[order[pos]], col[order[pos + 1]]);
            if lo >= hi {
                continue;
            }
            let (gr, hr) = (g_total - gl, h_total - hl);
            if hl < rule.min_child_weight || hr < rule.min_child_weight {
                continue;
            }
            let score = rule.gain(gl, hl, gr, hr);
            if strictly_better(score, best.as_ref()) {
                best = Some(SplitCandidate {
                    feature: f,
                    threshold: midpoint(lo, hi),
                    score,
                });
            }
        }
    }
    best
}

pub(crate) fn partition(
    data: &Dataset,
    samples: &[usize],
    split: &SplitCandidate,
) -> (Vec<usize>, Vec<usize>) {
    let col = data.column(split.feature);
    samples.iter().partition(|&&s| col[s] < split.threshold)
}
