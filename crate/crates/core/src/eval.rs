//! Confusion counts and Se/PPV/F1 with Good as the positive class.
//!
//! A ratio whose denominator is zero is `None` (serialized as `null`), never 0.

use std::ops::Add;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_io::{DataError, DatasetManifest, QualityLabel, Split};
use crate::ensemble::{EnsembleModel, PredictionReason, PredictionResult, DEFAULT_THRESHOLD};
use crate::pipeline::{classify_segment, PipelineConfig, PipelineError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{preds} predictions but {truth} ground-truth labels")]
    LengthMismatch { preds: usize, truth: usize },
    #[error("nothing to evaluate")]
    EmptyInput,
    #[error("split '{0}' has no segments")]
    EmptySplit(&'static str),
    #[error("segment {segment_id}: {source}")]
    Data {
        segment_id: String,
        #[source]
        source: DataError,
    },
    #[error("segment {segment_id}: {source}")]
    Pipeline {
        segment_id: String,
        #[source]
        source: PipelineError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Add for ConfusionMatrix {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn record(&mut self, pred: QualityLabel, truth: QualityLabel) {
        match (pred.is_good(), truth.is_good()) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    /// Same counts with Bad as the positive class.
    pub fn swapped(&self) -> Self {
        Self {
            tp: self.tn,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tp,
        }
    }

    pub fn sensitivity(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn ppv(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn specificity(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fp)
    }

    pub fn npv(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fn_)
    }

    pub fn f1(&self) -> Option<f64> {
        match (self.sensitivity(), self.ppv()) {
            (Some(se), Some(ppv)) if se + ppv > 0.0 => Some(2.0 * se * ppv / (se + ppv)),
            (Some(_), Some(_)) => Some(0.0),
            _ => None,
        }
    }
}

pub fn confusion(preds: &[QualityLabel], truth: &[QualityLabel]) -> Result<ConfusionMatrix, EvalError> {
    if preds.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            preds: preds.len(),
            truth: truth.len(),
        });
    }
    if preds.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in preds.iter().zip(truth) {
        cm.record(p, t);
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub sensitivity: Option<f64>,
    pub ppv: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub positive_class: QualityLabel,
    pub threshold: f64,
    pub confusion: ConfusionMatrix,
    pub sensitivity: Option<f64>,
    pub ppv: Option<f64>,
    pub f1: Option<f64>,
    pub n_evaluated: u64,
    pub n_too_few_beats: u64,
    pub model_descriptor: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub threshold_sweep: Vec<SweepPoint>,
}

pub fn metrics(cm: ConfusionMatrix) -> EvalReport {
    EvalReport {
        positive_class: QualityLabel::Good,
        threshold: DEFAULT_THRESHOLD,
        confusion: cm,
        sensitivity: cm.sensitivity(),
        ppv: cm.ppv(),
        f1: cm.f1(),
        n_evaluated: cm.total(),
        n_too_few_beats: 0,
        model_descriptor: String::new(),
        threshold_sweep: Vec::new(),
    }
}

/// Thresholds 0.00, 0.05, ..., 1.00.
pub fn sweep_thresholds() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

/// Report from already computed predictions. Too-few-beats predictions stay
/// Bad at every sweep threshold.
pub fn report_from_predictions(
    preds: &[PredictionResult],
    truth: &[QualityLabel],
    threshold: f64,
    model_descriptor: &str,
) -> Result<EvalReport, EvalError> {
    let labels: Vec<QualityLabel> = preds.iter().map(|p| p.label).collect();
    let cm = confusion(&labels, truth)?;
    let threshold_sweep = sweep_thresholds()
        .into_iter()
        .map(|t| {
            let mut cm = ConfusionMatrix::default();
            for (p, &y) in preds.iter().zip(truth) {
                let good = p.reason != Some(PredictionReason::TooFewBeats) && p.score >= t;
                let label = if good {
                    QualityLabel::Good
                } else {
                    QualityLabel::Bad
                };
                cm.record(label, y);
            }
            SweepPoint {
                threshold: t,
                sensitivity: cm.sensitivity(),
                ppv: cm.ppv(),
                f1: cm.f1(),
            }
        })
        .collect();
    Ok(EvalReport {
        threshold,
        n_too_few_beats: preds
            .iter()
            .filter(|p| p.reason == Some(PredictionReason::TooFewBeats))
            .count() as u64,
        model_descriptor: model_descriptor.to_string(),
        threshold_sweep,
        ..metrics(cm)
    })
}

/// Runs every segment of `split` through filter, features and the model.
pub fn evaluate(
    model: &EnsembleModel,
    manifest: &DatasetManifest,
    split: Split,
    sample_rate_hz: f64,
    config: &PipelineConfig,
    threshold: f64,
) -> Result<EvalReport, EvalError> {
    let entries: Vec<_> = manifest.entries_in(split).collect();
    if entries.is_empty() {
        return Err(EvalError::EmptySplit(split.as_str()));
    }
    let outcomes: Vec<Result<PredictionResult, EvalError>> = entries
        .par_iter()
        .map(|entry| {
            let segment = manifest
                .load_entry(entry, sample_rate_hz)
                .map_err(|source| EvalError::Data {
                    segment_id: entry.segment_id.clone(),
                    source,
                })?;
            classify_segment(&segment, model, config, threshold).map_err(|source| EvalError::Pipeline {
                segment_id: entry.segment_id.clone(),
                source,
            })
        })
        .collect();
    let preds = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;
    let truth: Vec<QualityLabel> = entries.iter().map(|e| e.label()).collect();
    report_from_predictions(&preds, &truth, threshold, &model.descriptor())
}

#[cfg(test)]
mod tests {
    use super::*;
    use QualityLabel::{Bad, Good};

    fn cm(tp: u64, fp: u64, fn_: u64, tn: u64) -> ConfusionMatrix {
        ConfusionMatrix { tp, fp, fn_, tn }
    }

    #[test]
    fn confusion_examples() {
        let perfect: Vec<_> = [Good; 5].into_iter().chain([Bad; 5]).collect();
        assert_eq!(confusion(&perfect, &perfect).unwrap(), cm(5, 0, 0, 5));
        assert_eq!(confusion(&[Good; 4], &[Bad; 4]).unwrap(), cm(0, 4, 0, 0));
        assert_eq!(
            confusion(&[Good, Good, Bad, Bad], &[Good, Bad, Good, Bad]).unwrap(),
            cm(1, 1, 1, 1)
        );
        assert!(matches!(
            confusion(&[Good], &[]),
            Err(EvalError::LengthMismatch { .. })
        ));
        assert!(matches!(confusion(&[], &[]), Err(EvalError::EmptyInput)));
    }

    #[test]
    fn metric_examples() {
        let r = metrics(cm(3, 1, 1, 5));
        assert_eq!(r.sensitivity, Some(0.75));
        assert_eq!(r.ppv, Some(0.75));
        assert_eq!(r.f1, Some(0.75));
        let r = metrics(cm(0, 2, 0, 3));
        assert_eq!(r.sensitivity, None);
        assert_eq!(r.ppv, Some(0.0));
        assert_eq!(r.f1, None);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"sensitivity\":null"));
        assert!(json.contains("\"fn\":0"));
    }

    #[test]
    fn published_catboost_row_is_consistent() {
        // Se 94.7 %, PPV 95.4 % give F1 95.0 % to one decimal.
        let (se, ppv): (f64, f64) = (0.947, 0.954);
        let f1 = 2.0 * se * ppv / (se + ppv);
        assert_eq!((f1 * 1000.0).round() / 10.0, 95.0);
    }

    #[test]
    fn constant_good_gives_base_rate_ppv() {
        let truth: Vec<_> = [Good; 25].into_iter().chain([Bad; 75]).collect();
        let r = metrics(confusion(&[Good; 100], &truth).unwrap());
        assert_eq!(r.ppv, Some(0.25));
        assert_eq!(r.sensitivity, Some(1.0));
    }

    #[test]
    fn swapping_classes_gives_specificity_and_npv() {
        let c = cm(7, 2, 3, 11);
        let s = c.swapped();
        assert_eq!(s.sensitivity(), c.specificity());
        assert_eq!(s.ppv(), c.npv());
        assert_eq!(s.swapped(), c);
    }

    #[test]
    fn sweep_keeps_too_few_beats_bad() {
        let preds = vec![
            PredictionResult::too_few_beats(),
            PredictionResult {
                label: Good,
                score: 0.8,
                reason: Some(PredictionReason::Model),
            },
        ];
        let r = report_from_predictions(&preds, &[Good, Good], 0.5, "m").unwrap();
        assert_eq!(r.n_too_few_beats, 1);
        assert_eq!(r.confusion, cm(1, 0, 1, 0));
        let at_zero = &r.threshold_sweep[0];
        assert_eq!(at_zero.sensitivity, Some(0.5));
        assert_eq!(r.threshold_sweep.len(), 21);
    }
}
