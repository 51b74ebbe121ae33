//! Quality assessment of 25 s photoplethysmography (PPG) segments.
//!
//! The pipeline runs in stages, each in its own module:
//!
//! 1. [`data_io`] loads segments and the dataset manifest and merges the
//!    three raw quality grades into Good/Bad.
//! 2. [`dsp_filter`] designs a Chebyshev type II bandpass as a biquad cascade
//!    and applies it forward-backward.
//! 3. [`beat_detect`] finds systolic peaks and onset troughs with the
//!    multi-scale peak and trough detector (MSPTD) and cuts beats.
//! 4. [`template_beat`] averages length-normalized beats into a template and
//!    measures every beat against it (DTW, Euclidean, Pearson).
//! 5. [`features`] assembles the 27-value feature vector.
//! 6. [`ensemble`] trains and applies a random forest or a Newton-boosted
//!    tree ensemble.
//! 7. [`eval`] computes confusion counts and Se/PPV/F1.
//!
//! [`synth`] generates labeled synthetic segments for desk-scale testing, and
//! [`pipeline`] wires filtering, feature extraction and prediction together.

pub mod beat_detect;
pub mod data_io;
pub mod dsp_filter;
pub mod ensemble;
pub mod eval;
pub mod features;
pub mod pipeline;
pub mod synth;
pub mod template_beat;

pub use beat_detect::{msptd, segment_beats, BeatMarkers, DetectError};
pub use data_io::{
    load_manifest, load_segment, merge_labels, write_segment, DataError, DatasetManifest, ManifestEntry,
    PpgSegment, QualityLabel, RawLabel, Split,
};
pub use dsp_filter::{
    design_cheby2_bandpass, filter_forward_backward, Biquad, BiquadCascade, FilterError, FilterSpec,
};
pub use ensemble::{
    load_model, predict, save_model, train_gradient_boosted, train_random_forest, BoostParams, EnsembleModel,
    ForestParams, ModelError, ModelKind, PredictionReason, PredictionResult,
};
pub use eval::{confusion, evaluate, metrics, ConfusionMatrix, EvalError, EvalReport};
pub use features::{
    extract_features, heart_rate_bpm, moments, FeatureError, FeatureVector, MomentSet, FEATURE_COLUMNS,
    FEATURE_DESCRIPTIONS, N_FEATURES,
};
pub use pipeline::PipelineConfig;
pub use synth::{generate, generate_corpus, GroundTruth, SynthError, SynthSpec};
pub use template_beat::{
    area_pm_std, build_template, distance_vectors, dtw_distance, euclid_distance, normalize_beat,
    pearson_corr, Beat, BeatError, DistanceVectors, TemplateBeat,
};
