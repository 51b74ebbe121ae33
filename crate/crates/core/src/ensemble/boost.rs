use serde::{Deserialize, Serialize};

use super::tree::{best_newton_split, partition, Dataset, DecisionTree, LeafValue, NewtonRule, Node};
use super::{
    check_training, normalize, sigmoid, EnsembleModel, Hyperparams, ModelError, ModelKind, FORMAT_VERSION,
};
use crate::data_io::QualityLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoostParams {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    /// Minimum gain for a split to be kept.
    pub gamma: f64,
    /// Minimum hessian sum per child.
    pub min_child_weight: f64,
    /// Recorded from the training call; the trainer itself is deterministic.
    pub seed: u64,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            n_rounds: 100,
            max_depth: 6,
            learning_rate: 0.3,
            lambda: 1.0,
            gamma: 0.0,
            min_child_weight: 1.0,
            seed: 0,
        }
    }
}

impl BoostParams {
    fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidParams(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be nonnegative");
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be nonnegative");
        }
        if !(self.min_child_weight >= 0.0 && self.min_child_weight.is_finite()) {
            return bad("min_child_weight must be nonnegative");
        }
        Ok(())
    }

    fn rule(&self) -> NewtonRule {
        NewtonRule {
            lambda: self.lambda,
            gamma: self.gamma,
            min_child_weight: self.min_child_weight,
        }
    }
}

struct NewtonGrower<'a> {
    data: &'a Dataset,
    grad: &'a [f64],
    hess: &'a [f64],
    rule: NewtonRule,
    max_depth: usize,
    features: Vec<usize>,
    nodes: Vec<Node>,
    gain: &'a mut [f64],
    depth_reached: usize,
}

impl NewtonGrower<'_> {
    fn grow(&mut self, samples: Vec<usize>, depth: usize) -> usize {
        let g: f64 = samples.iter().map(|&s| self.grad[s]).sum();
        let h: f64 = samples.iter().map(|&s| self.hess[s]).sum();
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: LeafValue::Score(self.rule.leaf_value(g, h)),
        });
        self.depth_reached = self.depth_reached.max(depth);
        if depth >= self.max_depth || samples.len() < 2 {
            return at;
        }
        let split = best_newton_split(
            self.data,
            self.grad,
            self.hess,
            &samples,
            &self.features,
            &self.rule,
        );
        let Some(split) = split.filter(|s| s.score > 0.0) else {
            return at;
        };
        self.gain[split.feature] += split.score;
        let (left, right) = partition(self.data, &samples, &split);
        drop(samples);
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.nodes[at] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: l,
            right: r,
        };
        at
    }
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        carry += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
    }
    sum + carry
}

fn softplus(u: f64) -> f64 {
    u.max(0.0) + (-u.abs()).exp().ln_1p()
}

/// Logistic loss in terms of the margin `u`, which is `-z` for Good rows and
/// `z` for Bad ones. Written as `softplus(u)` because the expanded
/// `softplus(z) - t*z` cancels badly once the model is confident.
fn margin(z: f64, t: u8) -> f64 {
    if t == 1 {
        -z
    } else {
        z
    }
}

/// Mean logistic loss of logits `f` against 0/1 targets.
fn log_loss(f: &[f64], y: &[u8]) -> f64 {
    compensated_sum(f.iter().zip(y).map(|(&z, &t)| softplus(margin(z, t)))) / f.len() as f64
}

/// `softplus(u + d) - softplus(u)` without cancellation for small `d`.
fn softplus_change(u: f64, d: f64) -> f64 {
    if d.abs() < 1.0 {
        (sigmoid(u) * d.exp_m1()).ln_1p()
    } else {
        softplus(u + d) - softplus(u)
    }
}

/// Training logits as unevaluated `hi + lo` pairs. Late rounds add steps far
/// below the spacing of f64 logits; without the low word the rounding of
/// each update, not the Newton step, decides whether the loss goes down.
struct Logits {
    hi: Vec<f64>,
    lo: Vec<f64>,
}

impl Logits {
    fn new(value: f64, n: usize) -> Self {
        Self {
            hi: vec![value; n],
            lo: vec![0.0; n],
        }
    }

    fn get(&self, i: usize) -> f64 {
        self.hi[i] + self.lo[i]
    }

    fn add(&mut self, i: usize, step: f64) {
        let (a, b) = (self.hi[i], step);
        let s = a + b;
        let err = if a.abs() >= b.abs() {
            (a - s) + b
        } else {
            (b - s) + a
        };
        self.hi[i] = s;
        self.lo[i] += err;
    }
}

pub fn train_gradient_boosted(
    x: &[Vec<f64>],
    y: &[QualityLabel],
    params: &BoostParams,
    seed: u64,
) -> Result<EnsembleModel, ModelError> {
    train_gradient_boosted_traced(x, y, params, seed).map(|(m, _)| m)
}

/// Also returns the mean training log-loss before the first round and after
/// each round (`n_rounds + 1` values).
pub fn train_gradient_boosted_traced(
    x: &[Vec<f64>],
    y: &[QualityLabel],
    params: &BoostParams,
    seed: u64,
) -> Result<(EnsembleModel, Vec<f64>), ModelError> {
    let y = check_training(x, y)?;
    let data = Dataset::from_rows(x)?;
    params.validate()?;
    let n = data.n_rows();
    let n_features = data.n_features();

    let goods = y.iter().filter(|&&v| v == 1).count() as f64;
    let base_score = (goods / (n as f64 - goods)).ln();
    let mut logits = Logits::new(base_score, n);
    let mut losses = vec![log_loss(&logits.hi, &y)];
    let mut trees = Vec::with_capacity(params.n_rounds);
    let mut gain = vec![0.0; n_features];

    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut change = vec![0.0; n];
    for _ in 0..params.n_rounds {
        for i in 0..n {
            let p = sigmoid(logits.get(i));
            grad[i] = p - y[i] as f64;
            hess[i] = p * (1.0 - p);
        }
        let mut grower = NewtonGrower {
            data: &data,
            grad: &grad,
            hess: &hess,
            rule: params.rule(),
            max_depth: params.max_depth,
            features: (0..n_features).collect(),
            nodes: Vec::new(),
            gain: &mut gain,
            depth_reached: 0,
        };
        grower.grow((0..n).collect(), 0);
        let tree = DecisionTree {
            nodes: grower.nodes,
            max_depth_reached: grower.depth_reached,
        };
        for (i, row) in x.iter().enumerate() {
            let LeafValue::Score(s) = tree.leaf(row) else {
                unreachable!("boosted trees hold scores")
            };
            let step = params.learning_rate * s;
            change[i] = softplus_change(margin(logits.get(i), y[i]), margin(step, y[i]));
            logits.add(i, step);
        }
        // The trace advances by the summed per-row changes: the mean loss
        // moves by far less than one ulp per late round.
        let previous = losses[losses.len() - 1];
        losses.push(previous + compensated_sum(change.iter().copied()) / n as f64);
        trees.push(tree);
    }

    normalize(&mut gain);
    let mut stored = params.clone();
    stored.seed = seed;
    let model = EnsembleModel {
        format_version: FORMAT_VERSION,
        kind: ModelKind::GradientBoosted,
        n_features,
        base_score,
        trees,
        importances: gain,
        hyperparams: Hyperparams::Boosted(stored),
        oob_accuracy: None,
    };
    Ok((model, losses))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_change_matches_difference() {
        for u in [-30.0, -3.0, -0.2, 0.0, 0.7, 4.0, 25.0] {
            for d in [-2.5, -0.3, 1e-3, 0.9, 3.0] {
                let direct = softplus(u + d) - softplus(u);
                assert!((softplus_change(u, d) - direct).abs() <= 1e-12 * direct.abs().max(1e-300) + 1e-15);
            }
        }
        // Far below the spacing of softplus(u) the difference is all rounding.
        let tiny = softplus_change(-2.0, 1e-17);
        assert!((tiny / 1e-17 - sigmoid(-2.0)).abs() < 1e-12);
    }

    #[test]
    fn compensated_sum_keeps_small_terms() {
        let v = [1.0, 1e-17, -1.0, 1e-17];
        assert_eq!(compensated_sum(v.into_iter()), 2e-17);
    }

    #[test]
    fn trace_tracks_direct_loss() {
        let x: Vec<Vec<f64>> = (0..60).map(|i| vec![i as f64, ((i * 7) % 11) as f64]).collect();
        let y: Vec<QualityLabel> = (0..60)
            .map(|i| {
                if (i * 7) % 11 > 4 || i % 13 == 0 {
                    QualityLabel::Good
                } else {
                    QualityLabel::Bad
                }
            })
            .collect();
        let params = BoostParams {
            n_rounds: 40,
            max_depth: 3,
            ..BoostParams::default()
        };
        let (model, losses) = train_gradient_boosted_traced(&x, &y, &params, 1).unwrap();
        assert_eq!(losses.len(), 41);
        assert!(losses.windows(2).all(|w| w[1] <= w[0]));
        let t: Vec<u8> = y.iter().map(|l| l.is_good() as u8).collect();
        let logits: Vec<f64> = x.iter().map(|r| model.logit(r)).collect();
        let direct = log_loss(&logits, &t);
        assert!(
            (losses[40] - direct).abs() <= 1e-12 * direct,
            "{} vs {direct}",
            losses[40]
        );
    }
}
