//! The 27-value feature vector and its CSV form.
//!
//! Index layout: 0-4 moments of the whole segment, 5 heart rate (bpm), 6-10
//! moments of the template beat, 11 area of the template +/- 1 std band,
//! 12-16 moments of the per-beat DTW distances, 17-21 of the Euclidean
//! distances, 22-26 of the Pearson correlations. Each moment block is
//! (mean, median, std, skewness, excess kurtosis).

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beat_detect::{msptd, segment_beats, BeatMarkers, DetectError};
use crate::data_io::{PpgSegment, QualityLabel};
use crate::template_beat::{
    area_pm_std, build_template, distance_vectors, normalize_beat, BeatError, DistanceVectors, TemplateBeat,
    DEFAULT_BEAT_LENGTH,
};

pub const N_FEATURES: usize = 27;

pub const FEATURE_COLUMNS: [&str; N_FEATURES] = [
    "f00_mean_seg",
    "f01_median_seg",
    "f02_std_seg",
    "f03_skew_seg",
    "f04_kurt_seg",
    "f05_heart_rate",
    "f06_mean_template",
    "f07_median_template",
    "f08_std_template",
    "f09_skew_template",
    "f10_kurt_template",
    "f11_area_std_template",
    "f12_mean_dtw",
    "f13_median_dtw",
    "f14_std_dtw",
    "f15_skew_dtw",
    "f16_kurt_dtw",
    "f17_mean_euclid",
    "f18_median_euclid",
    "f19_std_euclid",
    "f20_skew_euclid",
    "f21_kurt_euclid",
    "f22_mean_pearson",
    "f23_median_pearson",
    "f24_std_pearson",
    "f25_skew_pearson",
    "f26_kurt_pearson",
];

pub const FEATURE_DESCRIPTIONS: [&str; N_FEATURES] = [
    "Mean of the full 25 s segments",
    "Median of the full 25 s segments",
    "Standard deviation of the full 25 s segments",
    "Skewness of the full 25 s segments",
    "Kurtosis of the full 25 s segments",
    "Heart Rate",
    "Mean of the template",
    "Median of the template",
    "Standard deviation of the template",
    "Skewness of the template",
    "Kurtosis of the template",
    "Area within ± 1 std of the template",
    "Mean DTW distance",
    "Median DTW distance",
    "Standard deviation DTW distance",
    "Skewness DTW distance",
    "Kurtosis DTW distance",
    "Mean Euclidean distance",
    "Median Euclidean distance",
    "Standard deviation Euclidean distance",
    "Skewness Euclidean distance",
    "Kurtosis Euclidean distance",
    "Mean Pearson's correlation",
    "Median Pearson's correlation",
    "Standard deviation Pearson's correlation",
    "Skewness Pearson's correlation",
    "Kurtosis Pearson's correlation",
];

const ZERO_SPREAD_REL: f64 = 1e-13;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("empty input")]
    EmptyInput,
    #[error("{beats} usable beat(s); at least 2 are needed")]
    TooFewBeats { beats: usize },
    #[error("{0} peak(s); at least 2 are needed for a heart rate")]
    TooFewPeaks(usize),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Beat(#[from] BeatError),
    #[error("feature {index} ({name}) is not finite")]
    NonFinite { index: usize, name: &'static str },
    #[error("{path}: {reason}")]
    Csv { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub skewness: f64,
    pub kurtosis: f64,
}

impl MomentSet {
    pub fn to_array(self) -> [f64; 5] {
        [self.mean, self.median, self.std, self.skewness, self.kurtosis]
    }
}

pub fn median(x: &[f64]) -> f64 {
    let mut sorted = x.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Mean, median, population std, skewness `m3 / m2^1.5` and excess kurtosis
/// `m4 / m2^2 - 3` with biased central moments. Inputs without spread give
/// zero std, skewness and kurtosis.
pub fn moments(x: &[f64]) -> Result<MomentSet, FeatureError> {
    if x.is_empty() {
        return Err(FeatureError::EmptyInput);
    }
    let n = x.len() as f64;
    let mut mean = x.iter().sum::<f64>() / n;
    mean += x.iter().map(|v| v - mean).sum::<f64>() / n;

    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;

    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs())) * ZERO_SPREAD_REL;
    let (std, skewness, kurtosis) = if m2 <= scale * scale {
        (0.0, 0.0, 0.0)
    } else {
        (m2.sqrt(), m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    };
    Ok(MomentSet {
        mean,
        median: median(x),
        std,
        skewness,
        kurtosis,
    })
}

/// 60 over the median peak-to-peak interval.
pub fn heart_rate_bpm(markers: &BeatMarkers, sample_rate_hz: f64) -> Result<f64, FeatureError> {
    let peaks = &markers.peak_indices;
    if peaks.len() < 2 {
        return Err(FeatureError::TooFewPeaks(peaks.len()));
    }
    let intervals: Vec<f64> = peaks
        .windows(2)
        .map(|w| (w[1] - w[0]) as f64 / sample_rate_hz)
        .collect();
    Ok(60.0 / median(&intervals))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: [f64; N_FEATURES],
}

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn heart_rate(&self) -> f64 {
        self.values[5]
    }

    pub fn mean_pearson(&self) -> f64 {
        self.values[22]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Points each beat is resampled to before averaging and distances.
    pub beat_length: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            beat_length: DEFAULT_BEAT_LENGTH,
        }
    }
}

/// Everything computed on the way to a feature vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureExtraction {
    pub features: FeatureVector,
    pub markers: BeatMarkers,
    pub n_beats: usize,
    pub template: TemplateBeat,
    pub distances: DistanceVectors,
}

/// Feature vector of an already filtered segment, default beat length.
pub fn extract_features(segment: &PpgSegment) -> Result<FeatureVector, FeatureError> {
    extract_features_from(
        segment.samples(),
        segment.sample_rate_hz(),
        &FeatureConfig::default(),
    )
    .map(|e| e.features)
}

pub fn extract_features_from(
    samples: &[f64],
    sample_rate_hz: f64,
    config: &FeatureConfig,
) -> Result<FeatureExtraction, FeatureError> {
    let segment_moments = moments(samples)?;

    let markers = msptd(samples)?;
    let beats = match segment_beats(samples, sample_rate_hz, &markers) {
        Ok(beats) => beats,
        Err(DetectError::TooFewBeats(_)) => return Err(FeatureError::TooFewBeats { beats: 0 }),
        Err(e) => return Err(e.into()),
    };
    if beats.len() < 2 {
        return Err(FeatureError::TooFewBeats { beats: beats.len() });
    }
    let heart_rate = heart_rate_bpm(&markers, sample_rate_hz)?;

    let beats = beats
        .iter()
        .map(|b| normalize_beat(b, config.beat_length))
        .collect::<Result<Vec<_>, _>>()?;
    let template = build_template(&beats)?;
    let template_moments = moments(&template.mean_beat)?;
    let area = area_pm_std(&template);
    let distances = distance_vectors(&beats, &template)?;

    let mut values = [0.0; N_FEATURES];
    values[0..5].copy_from_slice(&segment_moments.to_array());
    values[5] = heart_rate;
    values[6..11].copy_from_slice(&template_moments.to_array());
    values[11] = area;
    values[12..17].copy_from_slice(&moments(&distances.dtw)?.to_array());
    values[17..22].copy_from_slice(&moments(&distances.euclid)?.to_array());
    values[22..27].copy_from_slice(&moments(&distances.pearson)?.to_array());

    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(FeatureError::NonFinite {
            index,
            name: FEATURE_COLUMNS[index],
        });
    }
    Ok(FeatureExtraction {
        features: FeatureVector { values },
        markers,
        n_beats: beats.len(),
        template,
        distances,
    })
}

/// Order-preserving parallel extraction on the caller's rayon pool.
pub fn extract_batch(
    segments: &[PpgSegment],
    config: &FeatureConfig,
) -> Vec<Result<FeatureVector, FeatureError>> {
    segments
        .par_iter()
        .map(|s| extract_features_from(s.samples(), s.sample_rate_hz(), config).map(|e| e.features))
        .collect()
}

/// One line of a feature CSV. `features` is `None` for segments where
/// extraction failed (written as empty fields).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub segment_id: String,
    pub features: Option<FeatureVector>,
    pub label: Option<QualityLabel>,
}

pub fn feature_csv_header() -> String {
    let mut cols = vec!["segment_id"];
    cols.extend(FEATURE_COLUMNS);
    cols.push("label");
    cols.join(",")
}

pub fn feature_csv(rows: &[FeatureRow]) -> String {
    let mut out = feature_csv_header();
    out.push('\n');
    for row in rows {
        out.push_str(&row.segment_id);
        match &row.features {
            Some(fv) => {
                for v in fv.values {
                    out.push_str(&format!(",{v}"));
                }
            }
            None => out.push_str(&",".repeat(N_FEATURES)),
        }
        out.push(',');
        if let Some(label) = row.label {
            out.push_str(label.as_str());
        }
        out.push('\n');
    }
    out
}

pub fn read_feature_csv(path: &Path) -> Result<Vec<FeatureRow>, FeatureError> {
    let err = |reason: String| FeatureError::Csv {
        path: path.display().to_string(),
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| err(e.to_string()))?;
    let header = reader.headers().map_err(|e| err(e.to_string()))?.clone();
    let header: Vec<&str> = header.iter().collect();
    if header.join(",") != feature_csv_header() {
        return Err(err("unexpected header".into()));
    }

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| err(e.to_string()))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let fields: Vec<&str> = record.iter().collect();
        let value_fields = &fields[1..=N_FEATURES];
        let features = if value_fields.iter().all(|f| f.is_empty()) {
            None
        } else {
            let mut values = [0.0; N_FEATURES];
            for (i, f) in value_fields.iter().enumerate() {
                values[i] =
                    f.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                        err(format!("line {line}: bad value '{f}' in {}", FEATURE_COLUMNS[i]))
                    })?;
            }
            Some(FeatureVector { values })
        };
        let label_field = fields[N_FEATURES + 1];
        let label = if label_field.is_empty() {
            None
        } else {
            Some(
                label_field
                    .parse()
                    .map_err(|e: crate::data_io::DataError| err(format!("line {line}: {e}")))?,
            )
        };
        rows.push(FeatureRow {
            segment_id: fields[0].to_string(),
            features,
            label,
        });
    }
    Ok(rows)
}
