//! Multi-scale peak and trough detection (MSPTD) and beat cutting.
//!
//! For a linearly detrended window `d` of length `N`, scale `k` marks sample
//! `i` when `d[i]` exceeds both `d[i - k]` and `d[i + k]`, for
//! `k = 1..=N/2 - 1`. The scale `gamma` with the most marked samples is
//! selected, and the peaks are the samples marked at every scale up to
//! `gamma`. Troughs are the peaks of `-d`.
//!
//! The row sums that pick `gamma` only count samples with both neighbours
//! `i - k` and `i + k` inside the window. When the peaks themselves are
//! picked, a missing neighbour near the window ends is skipped rather than
//! failed, so an extremum within `gamma` samples of an edge can still be
//! found. The two endpoint samples themselves are never extrema.
//!
//! The scalogram is never materialized: one pass accumulates the row sums,
//! a second ANDs rows `1..=gamma` into a candidate mask.
//!
//! Extension beyond the detector proper: after detection, peaks and troughs
//! are reconciled to alternate by keeping the largest peak (smallest trough)
//! of any run of same-kind markers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_io::PpgSegment;
use crate::template_beat::Beat;

pub const MIN_SEGMENT_LEN: usize = 16;

/// Comparisons must clear this fraction of the signal range, which keeps
/// rounding noise (e.g. a detrended pure ramp) from creating extrema while
/// preserving offset and scale invariance.
const REL_TIE_TOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum DetectError {
    #[error("segment has {0} samples; at least {MIN_SEGMENT_LEN} are required")]
    SegmentTooShort(usize),
    #[error("{0} troughs found; at least 2 are needed to delimit a beat")]
    TooFewBeats(usize),
    #[error("marker index {index} out of range for {len} samples")]
    MarkerOutOfRange { index: usize, len: usize },
    #[error("sample rate must be positive, got {0}")]
    InvalidSampleRate(f64),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeatMarkers {
    #[serde(rename = "peaks")]
    pub peak_indices: Vec<usize>,
    #[serde(rename = "troughs")]
    pub trough_indices: Vec<usize>,
}

impl BeatMarkers {
    /// Whether peaks and troughs alternate once merged in index order.
    pub fn alternates(&self) -> bool {
        let mut merged: Vec<(usize, bool)> = self
            .peak_indices
            .iter()
            .map(|&i| (i, true))
            .chain(self.trough_indices.iter().map(|&i| (i, false)))
            .collect();
        merged.sort_unstable();
        merged.windows(2).all(|w| w[0].1 != w[1].1 && w[0].0 != w[1].0)
    }
}

/// Least-squares linear detrend.
pub fn detrend(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let t_mean = (n - 1.0) / 2.0;
    let x_mean = x.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (i, v) in x.iter().enumerate() {
        let dt = i as f64 - t_mean;
        sxy += dt * (v - x_mean);
        sxx += dt * dt;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    x.iter()
        .enumerate()
        .map(|(i, v)| v - x_mean - slope * (i as f64 - t_mean))
        .collect()
}

#[inline]
fn marked(d: &[f64], i: usize, k: usize, tol: f64) -> bool {
    let v = d[i];
    (i < k || v > d[i - k] + tol) && (i + k >= d.len() || v > d[i + k] + tol)
}

/// Number of samples in `k..n-k` marked at scale `k`, written as three
/// shifted slices so the loop vectorizes.
fn row_sum(d: &[f64], k: usize, tol: f64) -> usize {
    let n = d.len();
    d[k..n - k]
        .iter()
        .zip(&d[..n - 2 * k])
        .zip(&d[2 * k..])
        .map(|((&m, &l), &r)| ((m > l + tol) & (m > r + tol)) as usize)
        .sum()
}

/// Local-maxima scalogram peak picking on an already detrended signal.
fn scalogram_peaks(d: &[f64], tol: f64) -> Vec<usize> {
    let n = d.len();
    let max_scale = n / 2 - 1;
    if max_scale == 0 {
        return Vec::new();
    }
    let interior = 1..n - 1;

    let mut best_scale = 1;
    let mut best_sum = 0usize;
    for k in 1..=max_scale {
        let sum = row_sum(d, k, tol);
        if sum > best_sum {
            best_sum = sum;
            best_scale = k;
        }
    }
    if best_sum == 0 {
        return Vec::new();
    }

    let mut candidates: Vec<usize> = interior.filter(|&i| marked(d, i, 1, tol)).collect();
    for k in 2..=best_scale {
        candidates.retain(|&i| marked(d, i, k, tol));
        if candidates.is_empty() {
            break;
        }
    }
    candidates
}

/// Keeps one marker per run of same-kind markers: the largest peak or the
/// smallest trough (first one on ties).
fn reconcile(d: &[f64], peaks: &[usize], troughs: &[usize]) -> BeatMarkers {
    let mut merged: Vec<(usize, bool)> = peaks
        .iter()
        .map(|&i| (i, true))
        .chain(troughs.iter().map(|&i| (i, false)))
        .collect();
    merged.sort_unstable();

    let mut out = BeatMarkers::default();
    let mut run_start = 0;
    while run_start < merged.len() {
        let is_peak = merged[run_start].1;
        let mut run_end = run_start + 1;
        while run_end < merged.len() && merged[run_end].1 == is_peak {
            run_end += 1;
        }
        let mut keep = merged[run_start].0;
        for &(idx, _) in &merged[run_start + 1..run_end] {
            let better = if is_peak {
                d[idx] > d[keep]
            } else {
                d[idx] < d[keep]
            };
            if better {
                keep = idx;
            }
        }
        if is_peak {
            out.peak_indices.push(keep);
        } else {
            out.trough_indices.push(keep);
        }
        run_start = run_end;
    }
    out
}

/// Peaks and troughs of a (filtered) sample sequence.
pub fn msptd(samples: &[f64]) -> Result<BeatMarkers, DetectError> {
    if samples.len() < MIN_SEGMENT_LEN {
        return Err(DetectError::SegmentTooShort(samples.len()));
    }
    let d = detrend(samples);
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let tol = REL_TIE_TOL * (hi - lo);

    let peaks = scalogram_peaks(&d, tol);
    let neg: Vec<f64> = d.iter().map(|v| -v).collect();
    let troughs = scalogram_peaks(&neg, tol);
    Ok(reconcile(&d, &peaks, &troughs))
}

pub fn msptd_segment(segment: &PpgSegment) -> Result<BeatMarkers, DetectError> {
    msptd(segment.samples())
}

/// Cuts one beat per pair of consecutive troughs (onset to onset, both
/// endpoints included). Beats without a peak strictly inside are dropped.
pub fn segment_beats(
    samples: &[f64],
    sample_rate_hz: f64,
    markers: &BeatMarkers,
) -> Result<Vec<Beat>, DetectError> {
    if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
        return Err(DetectError::InvalidSampleRate(sample_rate_hz));
    }
    let len = samples.len();
    if let Some(&index) = markers
        .peak_indices
        .iter()
        .chain(&markers.trough_indices)
        .find(|&&i| i >= len)
    {
        return Err(DetectError::MarkerOutOfRange { index, len });
    }
    let troughs = &markers.trough_indices;
    if troughs.len() < 2 {
        return Err(DetectError::TooFewBeats(troughs.len()));
    }

    let peaks = &markers.peak_indices;
    let beats = troughs
        .windows(2)
        .filter(|w| {
            let first_after = peaks.partition_point(|&p| p <= w[0]);
            first_after < peaks.len() && peaks[first_after] < w[1]
        })
        .map(|w| Beat::from_slice(w[0], w[1], &samples[w[0]..=w[1]], sample_rate_hz))
        .collect();
    Ok(beats)
}
