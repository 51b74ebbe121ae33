//! Beat normalization, the template (average) beat, and beat-to-template
//! distances.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default number of points every beat is resampled to.
pub const DEFAULT_BEAT_LENGTH: usize = 100;

/// Below this fraction of the largest magnitude, spread is treated as zero.
const ZERO_SPREAD_REL: f64 = 1e-13;

#[derive(Debug, Error, PartialEq)]
pub enum BeatError {
    #[error("beat has {0} samples; at least 2 are required")]
    BeatTooShort(usize),
    #[error("normalized beat length must be at least 2, got {0}")]
    InvalidLength(usize),
    #[error("no beats to build a template from")]
    EmptyBeatSet,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("beat {0} has not been length-normalized")]
    NotNormalized(usize),
    #[error("empty input sequence")]
    EmptyInput,
}

/// One onset-to-onset beat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beat {
    /// Index of the opening trough in the source segment.
    pub start: usize,
    /// Index of the closing trough (inclusive).
    pub end: usize,
    pub samples: Vec<f64>,
    pub duration_s: f64,
    /// Resampled waveform; empty until [`normalize_beat`] runs.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub normalized: Vec<f64>,
}

impl Beat {
    pub fn from_slice(start: usize, end: usize, samples: &[f64], sample_rate_hz: f64) -> Self {
        Self {
            start,
            end,
            samples: samples.to_vec(),
            duration_s: (end - start) as f64 / sample_rate_hz,
            normalized: Vec::new(),
        }
    }

    pub fn is_normalized(&self) -> bool {
        !self.normalized.is_empty()
    }
}

/// Linear interpolation of `samples` onto `len` equally spaced points
/// spanning the whole slice; both endpoints are reproduced exactly.
pub fn resample_linear(samples: &[f64], len: usize) -> Result<Vec<f64>, BeatError> {
    if samples.len() < 2 {
        return Err(BeatError::BeatTooShort(samples.len()));
    }
    if len < 2 {
        return Err(BeatError::InvalidLength(len));
    }
    let last = samples.len() - 1;
    let mut out = Vec::with_capacity(len);
    for j in 0..len {
        if j == len - 1 {
            out.push(samples[last]);
            break;
        }
        let pos = (j * last) as f64 / (len - 1) as f64;
        let i0 = (pos.floor() as usize).min(last - 1);
        let frac = pos - i0 as f64;
        out.push(samples[i0] + frac * (samples[i0 + 1] - samples[i0]));
    }
    Ok(out)
}

pub fn normalize_beat(beat: &Beat, len: usize) -> Result<Beat, BeatError> {
    Ok(Beat {
        normalized: resample_linear(&beat.samples, len)?,
        ..beat.clone()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateBeat {
    pub mean_beat: Vec<f64>,
    /// Pointwise population standard deviation.
    pub std_beat: Vec<f64>,
    pub n_beats: usize,
}

impl TemplateBeat {
    pub fn len(&self) -> usize {
        self.mean_beat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean_beat.is_empty()
    }
}

pub fn build_template(beats: &[Beat]) -> Result<TemplateBeat, BeatError> {
    let first = beats.first().ok_or(BeatError::EmptyBeatSet)?;
    let len = first.normalized.len();
    for (i, b) in beats.iter().enumerate() {
        if !b.is_normalized() {
            return Err(BeatError::NotNormalized(i));
        }
        if b.normalized.len() != len {
            return Err(BeatError::LengthMismatch(len, b.normalized.len()));
        }
    }
    let n = beats.len() as f64;
    let mut mean_beat = vec![0.0; len];
    for b in beats {
        for (m, v) in mean_beat.iter_mut().zip(&b.normalized) {
            *m += v;
        }
    }
    mean_beat.iter_mut().for_each(|m| *m /= n);

    let mut var = vec![0.0; len];
    for b in beats {
        for ((s, v), m) in var.iter_mut().zip(&b.normalized).zip(&mean_beat) {
            *s += (v - m) * (v - m);
        }
    }
    let std_beat = if beats.len() == 1 {
        vec![0.0; len]
    } else {
        var.into_iter().map(|s| (s / n).sqrt()).collect()
    };
    Ok(TemplateBeat {
        mean_beat,
        std_beat,
        n_beats: beats.len(),
    })
}

/// Area of the band mean +/- 1 std over normalized beat time `t` in `[0, 1]`,
/// by the trapezoid rule.
pub fn area_pm_std(template: &TemplateBeat) -> f64 {
    let len = template.std_beat.len();
    if len < 2 {
        return 0.0;
    }
    let dt = 1.0 / (len - 1) as f64;
    template.std_beat.windows(2).map(|w| (w[0] + w[1]) * dt).sum()
}

/// Unconstrained DTW with absolute-difference cost and no normalization.
pub fn dtw_distance(a: &[f64], b: &[f64]) -> Result<f64, BeatError> {
    if a.is_empty() || b.is_empty() {
        return Err(BeatError::EmptyInput);
    }
    let m = b.len();
    let mut prev = vec![0.0; m];
    let mut curr = vec![0.0; m];

    prev[0] = (a[0] - b[0]).abs();
    for j in 1..m {
        prev[j] = (a[0] - b[j]).abs() + prev[j - 1];
    }
    for &ai in &a[1..] {
        curr[0] = (ai - b[0]).abs() + prev[0];
        for j in 1..m {
            let best = prev[j].min(curr[j - 1]).min(prev[j - 1]);
            curr[j] = (ai - b[j]).abs() + best;
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    Ok(prev[m - 1])
}

pub fn euclid_distance(a: &[f64], b: &[f64]) -> Result<f64, BeatError> {
    if a.len() != b.len() {
        return Err(BeatError::LengthMismatch(a.len(), b.len()));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Sample Pearson correlation. A constant argument has no morphology to
/// correlate: `value` is then 0.0 and `zero_variance` is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub value: f64,
    pub zero_variance: bool,
}

fn centered_ss(x: &[f64]) -> (Vec<f64>, f64, bool) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let dev: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let ss: f64 = dev.iter().map(|d| d * d).sum();
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs())) * ZERO_SPREAD_REL;
    let degenerate = ss <= x.len() as f64 * scale * scale;
    (dev, ss, degenerate)
}

pub fn pearson_corr(a: &[f64], b: &[f64]) -> Result<Correlation, BeatError> {
    if a.len() != b.len() {
        return Err(BeatError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(BeatError::EmptyInput);
    }
    let (da, ssa, flat_a) = centered_ss(a);
    let (db, ssb, flat_b) = centered_ss(b);
    if flat_a || flat_b {
        return Ok(Correlation {
            value: 0.0,
            zero_variance: true,
        });
    }
    let cross: f64 = da.iter().zip(&db).map(|(x, y)| x * y).sum();
    Ok(Correlation {
        value: (cross / (ssa * ssb).sqrt()).clamp(-1.0, 1.0),
        zero_variance: false,
    })
}

/// Per-beat distances to the template mean beat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceVectors {
    pub dtw: Vec<f64>,
    pub euclid: Vec<f64>,
    pub pearson: Vec<f64>,
    /// Beats whose correlation fell back to 0.0 for lack of variance.
    pub zero_variance_beats: usize,
}

/// Every beat (normalized) against `template.mean_beat`; DTW also runs on
/// the normalized beats.
pub fn distance_vectors(beats: &[Beat], template: &TemplateBeat) -> Result<DistanceVectors, BeatError> {
    let mut out = DistanceVectors {
        dtw: Vec::with_capacity(beats.len()),
        euclid: Vec::with_capacity(beats.len()),
        pearson: Vec::with_capacity(beats.len()),
        zero_variance_beats: 0,
    };
    for (i, beat) in beats.iter().enumerate() {
        if !beat.is_normalized() {
            return Err(BeatError::NotNormalized(i));
        }
        let x = &beat.normalized;
        let t = &template.mean_beat;
        out.dtw.push(dtw_distance(x, t)?);
        out.euclid.push(euclid_distance(x, t)?);
        let r = pearson_corr(x, t)?;
        out.pearson.push(r.value);
        out.zero_variance_beats += r.zero_variance as usize;
    }
    Ok(out)
}
