//! Filter, extract, predict: the per-segment path shared by the CLI and `eval`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beat_detect::DetectError;
use crate::data_io::PpgSegment;
use crate::dsp_filter::{design_cheby2_bandpass, filter_forward_backward, FilterError, FilterSpec};
use crate::ensemble::{predict_with_threshold, EnsembleModel, ModelError, PredictionResult};
use crate::features::{extract_features_from, FeatureConfig, FeatureError, FeatureExtraction};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl PipelineError {
    /// Segments with too few beats are a quality verdict, not a failure.
    pub fn is_too_few_beats(&self) -> bool {
        matches!(
            self,
            PipelineError::Feature(
                FeatureError::TooFewBeats { .. }
                    | FeatureError::TooFewPeaks(_)
                    | FeatureError::Detect(DetectError::TooFewBeats(_))
                    | FeatureError::Detect(DetectError::SegmentTooShort(_))
            )
        )
    }
}

/// Filter band without the sample rate, which comes from each segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandConfig {
    pub order: usize,
    pub low_cut_hz: f64,
    pub high_cut_hz: f64,
    pub stopband_atten_db: f64,
}

impl Default for BandConfig {
    fn default() -> Self {
        Self {
            order: FilterSpec::DEFAULT_ORDER,
            low_cut_hz: FilterSpec::DEFAULT_LOW_HZ,
            high_cut_hz: FilterSpec::DEFAULT_HIGH_HZ,
            stopband_atten_db: FilterSpec::DEFAULT_ATTEN_DB,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct PipelineConfig {
    pub band: BandConfig,
    pub features: FeatureConfig,
}

impl PipelineConfig {
    pub fn filter_spec(&self, sample_rate_hz: f64) -> FilterSpec {
        FilterSpec::with_band(
            self.band.order,
            self.band.low_cut_hz,
            self.band.high_cut_hz,
            self.band.stopband_atten_db,
            sample_rate_hz,
        )
    }

    /// Checks the band at a given rate without touching any data.
    pub fn validate(&self, sample_rate_hz: f64) -> Result<(), PipelineError> {
        self.filter_spec(sample_rate_hz).validate()?;
        if self.features.beat_length < 2 {
            return Err(FeatureError::Beat(crate::template_beat::BeatError::InvalidLength(
                self.features.beat_length,
            ))
            .into());
        }
        Ok(())
    }
}

pub fn filter_segment(segment: &PpgSegment, config: &PipelineConfig) -> Result<PpgSegment, PipelineError> {
    let cascade = design_cheby2_bandpass(&config.filter_spec(segment.sample_rate_hz()))?;
    Ok(filter_forward_backward(&cascade, segment)?)
}

/// Raw segment to features, with every intermediate kept.
pub fn process_segment(
    segment: &PpgSegment,
    config: &PipelineConfig,
) -> Result<FeatureExtraction, PipelineError> {
    let filtered = filter_segment(segment, config)?;
    Ok(extract_features_from(
        filtered.samples(),
        filtered.sample_rate_hz(),
        &config.features,
    )?)
}

/// Full path to a prediction; too-few-beats segments come back labeled Bad
/// with reason `TooFewBeats`.
pub fn classify_segment(
    segment: &PpgSegment,
    model: &EnsembleModel,
    config: &PipelineConfig,
    threshold: f64,
) -> Result<PredictionResult, PipelineError> {
    match process_segment(segment, config) {
        Ok(e) => Ok(predict_with_threshold(model, e.features.as_slice(), threshold)?),
        Err(e) if e.is_too_few_beats() => Ok(PredictionResult::too_few_beats()),
        Err(e) => Err(e),
    }
}

/// Order-preserving parallel feature extraction on the caller's pool.
pub fn process_batch(
    segments: &[PpgSegment],
    config: &PipelineConfig,
) -> Vec<Result<FeatureExtraction, PipelineError>> {
    segments.par_iter().map(|s| process_segment(s, config)).collect()
}
