//! Tree ensembles: a CART random forest and a Newton-boosted logistic ensemble.

mod boost;
mod forest;
pub mod tree;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_io::QualityLabel;

pub use boost::{train_gradient_boosted, train_gradient_boosted_traced, BoostParams};
pub use forest::{train_random_forest, ForestParams};
pub use tree::{DecisionTree, LeafValue, Node};

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training labels contain a single class")]
    SingleClassTraining,
    #[error("{rows} feature rows but {labels} labels")]
    LabelCountMismatch { rows: usize, labels: usize },
    #[error("expected {expected} features, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value in row {row}, feature {feature}")]
    NonFiniteInput { row: usize, feature: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidParams(String),
    #[error("unsupported model format_version {found} (this build reads {FORMAT_VERSION})")]
    UnsupportedVersion { found: i64 },
    #[error("corrupt model: {0}")]
    CorruptModel(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    RandomForest,
    GradientBoosted,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::RandomForest => "random_forest",
            ModelKind::GradientBoosted => "gradient_boosted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Hyperparams {
    Forest(ForestParams),
    Boosted(BoostParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub format_version: u32,
    pub kind: ModelKind,
    pub n_features: usize,
    /// Prior logit for boosted models; 0 for forests.
    pub base_score: f64,
    pub trees: Vec<DecisionTree>,
    /// Normalized impurity decrease (forest) or total split gain (boosted).
    pub importances: Vec<f64>,
    pub hyperparams: Hyperparams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oob_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionReason {
    Model,
    TooFewBeats,
}

impl PredictionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            PredictionReason::Model => "model",
            PredictionReason::TooFewBeats => "too_few_beats",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub label: QualityLabel,
    /// Probability of Good.
    pub score: f64,
    pub reason: Option<PredictionReason>,
}

impl PredictionResult {
    /// Fallback for segments that never reach the model.
    pub fn too_few_beats() -> Self {
        Self {
            label: QualityLabel::Bad,
            score: 0.0,
            reason: Some(PredictionReason::TooFewBeats),
        }
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn check_training(x: &[Vec<f64>], y: &[QualityLabel]) -> Result<Vec<u8>, ModelError> {
    if x.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    if x.len() != y.len() {
        return Err(ModelError::LabelCountMismatch {
            rows: x.len(),
            labels: y.len(),
        });
    }
    let y: Vec<u8> = y.iter().map(|l| l.is_good() as u8).collect();
    let goods = y.iter().filter(|&&v| v == 1).count();
    if goods == 0 || goods == y.len() {
        return Err(ModelError::SingleClassTraining);
    }
    Ok(y)
}

/// Scales nonnegative weights to sum 1; an all-zero vector stays zero.
pub(crate) fn normalize(v: &mut [f64]) {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter_mut().for_each(|w| *w /= total);
    }
}

impl EnsembleModel {
    /// Probability of Good.
    pub fn score(&self, x: &[f64]) -> Result<f64, ModelError> {
        if x.len() != self.n_features {
            return Err(ModelError::DimensionMismatch {
                expected: self.n_features,
                found: x.len(),
            });
        }
        if let Some(feature) = x.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteInput { row: 0, feature });
        }
        Ok(match self.kind {
            ModelKind::RandomForest => {
                let sum: f64 = self
                    .trees
                    .iter()
                    .map(|t| match t.leaf(x) {
                        LeafValue::Probabilities(p) => p[1],
                        LeafValue::Score(s) => *s,
                    })
                    .sum();
                (sum / self.trees.len() as f64).clamp(0.0, 1.0)
            }
            ModelKind::GradientBoosted => sigmoid(self.logit(x)),
        })
    }

    /// Raw additive score of a boosted model (assumes a validated input).
    pub fn logit(&self, x: &[f64]) -> f64 {
        let lr = match &self.hyperparams {
            Hyperparams::Boosted(p) => p.learning_rate,
            Hyperparams::Forest(_) => 1.0,
        };
        self.trees.iter().fold(self.base_score, |acc, t| match t.leaf(x) {
            LeafValue::Score(s) => acc + lr * s,
            LeafValue::Probabilities(p) => acc + lr * p[1],
        })
    }

    pub fn feature_importance(&self) -> &[f64] {
        &self.importances
    }

    /// Human-readable identifier for reports.
    pub fn descriptor(&self) -> String {
        match &self.hyperparams {
            Hyperparams::Forest(p) => format!(
                "random_forest(n_trees={}, max_features={}, seed={})",
                p.n_trees,
                p.max_features
                    .map_or_else(|| "sqrt".to_string(), |m| m.to_string()),
                p.seed
            ),
            Hyperparams::Boosted(p) => format!(
                "gradient_boosted(n_rounds={}, max_depth={}, lr={}, lambda={}, seed={})",
                p.n_rounds, p.max_depth, p.learning_rate, p.lambda, p.seed
            ),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ModelError::CorruptModel(e.to_string()))?;
        match value.get("format_version").and_then(|v| v.as_i64()) {
            Some(v) if v == FORMAT_VERSION as i64 => {}
            Some(v) => return Err(ModelError::UnsupportedVersion { found: v }),
            None => return Err(ModelError::CorruptModel("missing format_version".into())),
        }
        let model: EnsembleModel =
            serde_json::from_value(value).map_err(|e| ModelError::CorruptModel(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let corrupt = |m: &str| Err(ModelError::CorruptModel(m.to_string()));
        if self.n_features == 0 {
            return corrupt("n_features is zero");
        }
        if self.importances.len() != self.n_features {
            return corrupt("importances length differs from n_features");
        }
        if self.importances.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return corrupt("importances must be finite and nonnegative");
        }
        let total: f64 = self.importances.iter().sum();
        if total != 0.0 && (total - 1.0).abs() > 1e-9 {
            return corrupt("importances do not sum to 1");
        }
        if !self.base_score.is_finite() {
            return corrupt("non-finite base_score");
        }
        match (self.kind, &self.hyperparams) {
            (ModelKind::RandomForest, Hyperparams::Forest(_)) => {
                if self.trees.is_empty() {
                    return corrupt("forest without trees");
                }
            }
            (ModelKind::GradientBoosted, Hyperparams::Boosted(_)) => {}
            _ => return corrupt("hyperparams do not match kind"),
        }
        for tree in &self.trees {
            tree.validate(self.n_features)?;
            for node in &tree.nodes {
                let ok = match (self.kind, node) {
                    (
                        ModelKind::RandomForest,
                        Node::Leaf {
                            value: LeafValue::Probabilities(p),
                        },
                    ) => p.iter().all(|v| (0.0..=1.0).contains(v)),
                    (
                        ModelKind::GradientBoosted,
                        Node::Leaf {
                            value: LeafValue::Score(s),
                        },
                    ) => s.is_finite(),
                    (_, Node::Split { .. }) => true,
                    _ => false,
                };
                if !ok {
                    return corrupt("leaf value does not match model kind");
                }
            }
        }
        Ok(())
    }
}

pub fn predict(model: &EnsembleModel, x: &[f64]) -> Result<PredictionResult, ModelError> {
    predict_with_threshold(model, x, DEFAULT_THRESHOLD)
}

pub fn predict_with_threshold(
    model: &EnsembleModel,
    x: &[f64],
    threshold: f64,
) -> Result<PredictionResult, ModelError> {
    let score = model.score(x)?;
    let label = if score >= threshold {
        QualityLabel::Good
    } else {
        QualityLabel::Bad
    };
    Ok(PredictionResult {
        label,
        score,
        reason: Some(PredictionReason::Model),
    })
}

pub fn save_model(model: &EnsembleModel, path: &Path) -> Result<(), ModelError> {
    fs::write(path, model.to_json()).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_model(path: &Path) -> Result<EnsembleModel, ModelError> {
    let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    EnsembleModel::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use QualityLabel::{Bad, Good};

    pub(crate) fn toy() -> (Vec<Vec<f64>>, Vec<QualityLabel>) {
        let x = [0.0, 1.0, 10.0, 11.0]
            .iter()
            .map(|&v| {
                let mut row = vec![0.0; 27];
                row[0] = v;
                row
            })
            .collect();
        (x, vec![Bad, Bad, Good, Good])
    }

    fn informative_22(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<QualityLabel>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..27).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let y = x.iter().map(|r| if r[22] > 0.1 { Good } else { Bad }).collect();
        (x, y)
    }

    fn random_rows(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..27).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect()
    }

    #[test]
    fn forest_fits_toy() {
        let (x, y) = toy();
        let m = train_random_forest(&x, &y, &ForestParams::default(), 1).unwrap();
        for (row, label) in x.iter().zip(&y) {
            assert_eq!(predict(&m, row).unwrap().label, *label);
        }
    }

    #[test]
    fn stump_threshold_and_one_hot_importance() {
        let (x, y) = toy();
        let params = ForestParams {
            n_trees: 1,
            max_depth: Some(1),
            bootstrap: false,
            max_features: Some(27),
            ..ForestParams::default()
        };
        let m = train_random_forest(&x, &y, &params, 0).unwrap();
        match &m.trees[0].nodes[0] {
            Node::Split {
                feature, threshold, ..
            } => {
                assert_eq!(*feature, 0);
                assert!(*threshold > 1.0 && *threshold < 10.0);
            }
            other => panic!("expected split, got {other:?}"),
        }
        let mut want = vec![0.0; 27];
        want[0] = 1.0;
        assert_eq!(m.importances, want);

        // Same thing on feature 5.
        let x5: Vec<Vec<f64>> = x
            .iter()
            .map(|r| {
                let mut r2 = vec![0.0; 27];
                r2[5] = r[0];
                r2
            })
            .collect();
        let m5 = train_random_forest(&x5, &y, &params, 0).unwrap();
        let mut want5 = vec![0.0; 27];
        want5[5] = 1.0;
        assert_eq!(m5.importances, want5);
    }

    #[test]
    fn unanimous_forest_scores_one() {
        let (x, y) = toy();
        let params = ForestParams {
            n_trees: 7,
            bootstrap: false,
            ..ForestParams::default()
        };
        let m = train_random_forest(&x, &y, &params, 3).unwrap();
        assert_eq!(m.score(&x[3]).unwrap(), 1.0);
        assert_eq!(m.score(&x[0]).unwrap(), 0.0);
    }

    #[test]
    fn zero_rounds_predicts_base_rate() {
        let (x, _) = toy();
        let y = vec![Bad, Bad, Bad, Good];
        let params = BoostParams {
            n_rounds: 0,
            ..BoostParams::default()
        };
        let m = train_gradient_boosted(&x, &y, &params, 0).unwrap();
        for row in random_rows(10, 9) {
            assert!((m.score(&row).unwrap() - 0.25).abs() < 1e-15);
        }
        assert!(m.importances.iter().all(|&w| w == 0.0));
        let balanced = train_gradient_boosted(&x, &[Bad, Good, Bad, Good], &params, 0).unwrap();
        assert_eq!(balanced.score(&x[0]).unwrap(), 0.5);
    }

    #[test]
    fn one_round_leaves_are_closed_form() {
        let (x, y) = toy();
        let params = BoostParams {
            n_rounds: 1,
            max_depth: 1,
            lambda: 1.0,
            min_child_weight: 0.0,
            ..BoostParams::default()
        };
        let m = train_gradient_boosted(&x, &y, &params, 0).unwrap();
        assert_eq!(m.base_score, 0.0);
        // p = 0.5 everywhere: g = -0.5 for Good, +0.5 for Bad, h = 0.25.
        let left = -(0.5 + 0.5) / (0.25 + 0.25 + 1.0);
        let right = -(-0.5 - 0.5) / (0.25 + 0.25 + 1.0);
        let tree = &m.trees[0];
        let leaf = |x: f64| {
            let mut row = vec![0.0; 27];
            row[0] = x;
            match tree.leaf(&row) {
                LeafValue::Score(s) => *s,
                _ => unreachable!(),
            }
        };
        assert!((leaf(0.0) - left).abs() < 1e-15);
        assert!((leaf(11.0) - right).abs() < 1e-15);
        assert!((m.logit(&x[3]) - 0.3 * right).abs() < 1e-15);
    }

    #[test]
    fn boosting_drives_toy_loss_down() {
        let (x, y) = toy();
        let params = BoostParams {
            n_rounds: 50,
            min_child_weight: 0.0,
            ..BoostParams::default()
        };
        let (_, losses) = train_gradient_boosted_traced(&x, &y, &params, 0).unwrap();
        assert_eq!(losses.len(), 51);
        assert!(*losses.last().unwrap() < 0.05, "{losses:?}");
        assert!(losses.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn informative_feature_dominates_importance() {
        let (x, y) = informative_22(400, 5);
        let rf = train_random_forest(&x, &y, &ForestParams::default(), 11).unwrap();
        let gb = train_gradient_boosted(&x, &y, &BoostParams::default(), 11).unwrap();
        for m in [&rf, &gb] {
            assert!(m.importances[22] > 0.5, "{:?}", m.importances);
            let total: f64 = m.importances.iter().sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
        assert!(rf.oob_accuracy.unwrap() > 0.9);
    }

    #[test]
    fn training_is_deterministic() {
        let (x, y) = informative_22(150, 8);
        let a = train_random_forest(&x, &y, &ForestParams::default(), 4).unwrap();
        let b = train_random_forest(&x, &y, &ForestParams::default(), 4).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = pool.install(|| train_random_forest(&x, &y, &ForestParams::default(), 4).unwrap());
        assert_eq!(a.to_json(), c.to_json());
        let d = train_random_forest(&x, &y, &ForestParams::default(), 5).unwrap();
        assert_ne!(a.to_json(), d.to_json());
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let (x, y) = informative_22(200, 2);
        let probe = random_rows(100, 77);
        for m in [
            train_random_forest(&x, &y, &ForestParams::default(), 1).unwrap(),
            train_gradient_boosted(&x, &y, &BoostParams::default(), 1).unwrap(),
        ] {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("m.json");
            save_model(&m, &path).unwrap();
            let back = load_model(&path).unwrap();
            assert_eq!(back, m);
            for row in &probe {
                assert_eq!(
                    m.score(row).unwrap().to_bits(),
                    back.score(row).unwrap().to_bits()
                );
            }
        }
    }

    #[test]
    fn corrupt_and_future_files_rejected() {
        let (x, y) = toy();
        let m = train_random_forest(&x, &y, &ForestParams::default(), 1).unwrap();
        let json = m.to_json();
        let truncated = &json[..json.len() / 2];
        assert!(matches!(
            EnsembleModel::from_json(truncated),
            Err(ModelError::CorruptModel(_))
        ));
        let bumped = json.replacen("\"format_version\": 1", "\"format_version\": 2", 1);
        assert!(matches!(
            EnsembleModel::from_json(&bumped),
            Err(ModelError::UnsupportedVersion { found: 2 })
        ));
        let bad_feature = json.replacen("\"feature\": 0", "\"feature\": 99", 1);
        assert!(matches!(
            EnsembleModel::from_json(&bad_feature),
            Err(ModelError::CorruptModel(_))
        ));
    }

    #[test]
    fn input_validation() {
        let (x, y) = toy();
        let m = train_random_forest(&x, &y, &ForestParams::default(), 1).unwrap();
        assert!(matches!(
            predict(&m, &[0.0; 5]),
            Err(ModelError::DimensionMismatch {
                expected: 27,
                found: 5
            })
        ));
        let mut row = vec![0.0; 27];
        row[3] = f64::NAN;
        assert!(predict(&m, &row).is_err());
        assert!(matches!(
            train_random_forest(&x, &[Good; 4], &ForestParams::default(), 0),
            Err(ModelError::SingleClassTraining)
        ));
        assert!(matches!(
            train_gradient_boosted(&[], &[], &BoostParams::default(), 0),
            Err(ModelError::EmptyTrainingSet)
        ));
    }

    #[test]
    fn threshold_defines_label() {
        let (x, y) = informative_22(100, 3);
        let m = train_gradient_boosted(&x, &y, &BoostParams::default(), 0).unwrap();
        for row in random_rows(50, 4) {
            let r = predict(&m, &row).unwrap();
            assert_eq!(r.label == Good, r.score >= 0.5);
            assert!(predict_with_threshold(&m, &row, 1.1).unwrap().label == Bad);
            assert_eq!(predict(&m, &row).unwrap(), r);
        }
    }
}
