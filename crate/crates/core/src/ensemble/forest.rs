use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{best_gini_split, partition, Dataset, DecisionTree, LeafValue, Node};
use super::{check_training, normalize, EnsembleModel, Hyperparams, ModelError, ModelKind, FORMAT_VERSION};
use crate::data_io::QualityLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Features drawn per split; `None` means `ceil(sqrt(n_features))`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    /// Recorded from the training call.
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_split: 2,
            max_features: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestParams {
    fn validate(&self, n_features: usize) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidParams(m.to_string()));
        if self.n_trees == 0 {
            return bad("n_trees must be at least 1");
        }
        if self.min_samples_split < 2 {
            return bad("min_samples_split must be at least 2");
        }
        if matches!(self.max_features, Some(m) if m == 0 || m > n_features) {
            return bad("max_features must be in 1..=n_features");
        }
        Ok(())
    }

    fn mtry(&self, n_features: usize) -> usize {
        self.max_features
            .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
            .clamp(1, n_features)
    }
}

struct GiniGrower<'a> {
    data: &'a Dataset,
    y: &'a [u8],
    params: &'a ForestParams,
    mtry: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    decrease: Vec<f64>,
    depth_reached: usize,
}

impl GiniGrower<'_> {
    fn leaf(&self, samples: &[usize]) -> Node {
        let good = samples.iter().filter(|&&s| self.y[s] == 1).count() as f64;
        let p = good / samples.len() as f64;
        Node::Leaf {
            value: LeafValue::Probabilities([1.0 - p, p]),
        }
    }

    fn grow(&mut self, samples: Vec<usize>, depth: usize) -> usize {
        let at = self.nodes.len();
        self.nodes.push(self.leaf(&samples));
        self.depth_reached = self.depth_reached.max(depth);

        let good = samples.iter().filter(|&&s| self.y[s] == 1).count();
        let pure = good == 0 || good == samples.len();
        if pure
            || samples.len() < self.params.min_samples_split
            || self.params.max_depth.is_some_and(|d| depth >= d)
        {
            return at;
        }

        // Draw the feature order; try the first `mtry`, then keep going one
        // feature at a time if none of them yields a valid split.
        let mut order: Vec<usize> = (0..self.data.n_features()).collect();
        order.shuffle(&mut self.rng);
        let mut split = best_gini_split(self.data, self.y, &samples, &order[..self.mtry]);
        for &f in &order[self.mtry..] {
            if split.is_some() {
                break;
            }
            split = best_gini_split(self.data, self.y, &samples, &[f]);
        }
        let Some(split) = split else { return at };

        self.decrease[split.feature] += split.score;
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

struct GrownTree {
    tree: DecisionTree,
    decrease: Vec<f64>,
    in_bag: Vec<bool>,
}

fn grow_tree(data: &Dataset, y: &[u8], params: &ForestParams, mtry: usize, seed: u64) -> GrownTree {
    let n = data.n_rows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<usize> = if params.bootstrap {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    let mut in_bag = vec![false; n];
    for &s in &samples {
        in_bag[s] = true;
    }
    let mut grower = GiniGrower {
        data,
        y,
        params,
        mtry,
        rng,
        nodes: Vec::new(),
        decrease: vec![0.0; data.n_features()],
        depth_reached: 0,
    };
    grower.grow(samples, 0);
    GrownTree {
        tree: DecisionTree {
            nodes: grower.nodes,
            max_depth_reached: grower.depth_reached,
        },
        decrease: grower.decrease,
        in_bag,
    }
}

/// Bagged CART forest. Tree `i` draws from `ChaCha8Rng::seed_from_u64(seed + i)`
/// so the model does not depend on the rayon pool size.
pub fn train_random_forest(
    x: &[Vec<f64>],
    y: &[QualityLabel],
    params: &ForestParams,
    seed: u64,
) -> Result<EnsembleModel, ModelError> {
    let y = check_training(x, y)?;
    let data = Dataset::from_rows(x)?;
    let n_features = data.n_features();
    params.validate(n_features)?;
    let mtry = params.mtry(n_features);

    let grown: Vec<GrownTree> = (0..params.n_trees)
        .into_par_iter()
        .map(|i| grow_tree(&data, &y, params, mtry, seed.wrapping_add(i as u64)))
        .collect();

    let mut importances = vec![0.0; n_features];
    for g in &grown {
        let mut d = g.decrease.clone();
        normalize(&mut d);
        importances.iter_mut().zip(&d).for_each(|(a, b)| *a += b);
    }
    normalize(&mut importances);

    let oob_accuracy = params.bootstrap.then(|| oob_accuracy(x, &y, &grown)).flatten();

    let mut stored = params.clone();
    stored.seed = seed;
    Ok(EnsembleModel {
        format_version: FORMAT_VERSION,
        kind: ModelKind::RandomForest,
        n_features,
        base_score: 0.0,
        trees: grown.into_iter().map(|g| g.tree).collect(),
        importances,
        hyperparams: Hyperparams::Forest(stored),
        oob_accuracy,
    })
}

fn oob_accuracy(x: &[Vec<f64>], y: &[u8], grown: &[GrownTree]) -> Option<f64> {
    let mut correct = 0usize;
    let mut counted = 0usize;
    for (i, row) in x.iter().enumerate() {
        let (mut sum, mut k) = (0.0, 0usize);
        for g in grown.iter().filter(|g| !g.in_bag[i]) {
            if let LeafValue::Probabilities(p) = g.tree.leaf(row) {
                sum += p[1];
                k += 1;
            }
        }
        if k > 0 {
            counted += 1;
            let predicted = (sum / k as f64 >= 0.5) as u8;
            correct += (predicted == y[i]) as usize;
        }
    }
    (counted > 0).then(|| correct as f64 / counted as f64)
}
