//! Synthetic PPG with known beats and a label fixed by the generator.
//!
//! Each beat is a systolic plus a diastolic Gaussian placed relative to the
//! beat onset, with positions and widths expressed as fractions of that beat's
//! period. Noise sources are optional and additive.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_io::{
    segment_csv, DataError, DatasetManifest, ManifestEntry, PpgSegment, QualityLabel, RawLabel, Split,
};

/// White-noise SNR at or above which a burst-free segment is Good.
pub const GOOD_SNR_DB: f64 = 10.0;
/// Good segments at or above this SNR are written with raw label Excellent.
pub const EXCELLENT_SNR_DB: f64 = 25.0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeatShape {
    pub systolic_amp: f64,
    pub systolic_pos: f64,
    pub systolic_width: f64,
    pub diastolic_amp: f64,
    pub diastolic_pos: f64,
    pub diastolic_width: f64,
}

impl Default for BeatShape {
    fn default() -> Self {
        Self {
            systolic_amp: 1.0,
            systolic_pos: 0.25,
            systolic_width: 0.08,
            diastolic_amp: 0.4,
            diastolic_pos: 0.55,
            diastolic_width: 0.12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineWander {
    pub amplitude: f64,
    pub freq_hz: f64,
}

/// `count` Gaussian-windowed sinusoids at random times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionBurst {
    pub amplitude: f64,
    pub count: usize,
    pub width_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Relative to the variance of the clean signal.
    pub white_snr_db: Option<f64>,
    pub baseline_wander: Option<BaselineWander>,
    pub motion_burst: Option<MotionBurst>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub heart_rate_bpm: f64,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub beat: BeatShape,
    /// Each inter-beat interval is scaled by `1 + u * pct / 100`, `u ~ U(-1, 1)`.
    pub hr_jitter_pct: f64,
    pub noise: NoiseSpec,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            heart_rate_bpm: 75.0,
            duration_s: 25.0,
            sample_rate_hz: 128.0,
            beat: BeatShape::default(),
            hr_jitter_pct: 0.0,
            noise: NoiseSpec::default(),
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |m: &str| Err(SynthError::InvalidSpec(m.to_string()));
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.heart_rate_bpm) || !positive(self.duration_s) || !positive(self.sample_rate_hz) {
            return fail("heart rate, duration and sample rate must be positive");
        }
        if self.duration_s * self.heart_rate_bpm / 60.0 < 2.0 {
            return fail("segment must hold at least two beats");
        }
        let b = &self.beat;
        let inside = |p: f64| p > 0.0 && p < 1.0;
        if !inside(b.systolic_pos) || !inside(b.diastolic_pos) {
            return fail("beat wave positions must lie in (0, 1)");
        }
        if !positive(b.systolic_width) || !positive(b.diastolic_width) {
            return fail("beat wave widths must be positive");
        }
        if !b.systolic_amp.is_finite() || !b.diastolic_amp.is_finite() {
            return fail("beat wave amplitudes must be finite");
        }
        if !(self.hr_jitter_pct >= 0.0 && self.hr_jitter_pct < 50.0) {
            return fail("hr_jitter_pct must be in [0, 50)");
        }
        if matches!(self.noise.white_snr_db, Some(s) if !s.is_finite()) {
            return fail("white_snr_db must be finite");
        }
        if let Some(w) = self.noise.baseline_wander {
            if !(w.amplitude >= 0.0 && w.amplitude.is_finite()) || !positive(w.freq_hz) {
                return fail("baseline wander needs amplitude >= 0 and frequency > 0");
            }
        }
        if let Some(m) = self.noise.motion_burst {
            if !(m.amplitude >= 0.0 && m.amplitude.is_finite()) || !positive(m.width_s) {
                return fail("motion bursts need amplitude >= 0 and width > 0");
            }
        }
        Ok(())
    }

    /// Generator-defined truth: enough SNR and no motion.
    pub fn label(&self) -> QualityLabel {
        let snr_ok = self.noise.white_snr_db.is_none_or(|s| s >= GOOD_SNR_DB);
        let bursts = self.noise.motion_burst.is_some_and(|m| m.count > 0);
        if snr_ok && !bursts {
            QualityLabel::Good
        } else {
            QualityLabel::Bad
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Sample index of each systolic maximum of the clean signal.
    pub peak_indices: Vec<usize>,
    /// Beat onset times in seconds, including partial beats at the edges.
    pub onset_times_s: Vec<f64>,
    /// 60 / mean inter-beat interval.
    pub heart_rate_bpm: f64,
    pub clean: Vec<f64>,
}

fn gaussian_into(out: &mut [f64], fs: f64, center: f64, sigma: f64, amp: f64) {
    let n = out.len() as isize;
    let lo = (((center - 6.0 * sigma) * fs).floor() as isize).clamp(0, n);
    let hi = (((center + 6.0 * sigma) * fs).ceil() as isize + 1).clamp(0, n);
    for i in lo..hi {
        let z = (i as f64 / fs - center) / sigma;
        out[i as usize] += amp * (-0.5 * z * z).exp();
    }
}

fn variance(x: &[f64]) -> f64 {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64
}

pub fn generate(spec: &SynthSpec) -> Result<(PpgSegment, QualityLabel, GroundTruth), SynthError> {
    spec.validate()?;
    let fs = spec.sample_rate_hz;
    let n = (spec.duration_s * fs).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let period = 60.0 / spec.heart_rate_bpm;

    // Onsets from one beat before the start to one beat past the end.
    let mut onsets = vec![-period];
    while *onsets.last().unwrap() <= spec.duration_s + period {
        let u: f64 = if spec.hr_jitter_pct > 0.0 {
            rng.random_range(-1.0..=1.0)
        } else {
            0.0
        };
        onsets.push(onsets.last().unwrap() + period * (1.0 + u * spec.hr_jitter_pct / 100.0));
    }

    let mut clean = vec![0.0; n];
    let b = &spec.beat;
    for w in onsets.windows(2) {
        let t = w[1] - w[0];
        gaussian_into(
            &mut clean,
            fs,
            w[0] + b.systolic_pos * t,
            b.systolic_width * t,
            b.systolic_amp,
        );
        gaussian_into(
            &mut clean,
            fs,
            w[0] + b.diastolic_pos * t,
            b.diastolic_width * t,
            b.diastolic_amp,
        );
    }

    let mut peak_indices = Vec::new();
    for w in onsets.windows(2) {
        let lo = ((w[0] * fs).ceil().max(0.0) as usize).min(n);
        let hi = ((w[1] * fs).ceil().max(0.0) as usize).min(n);
        if hi <= lo {
            continue;
        }
        let (off, _) = clean[lo..hi]
            .iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |best, (i, &v)| if v > best.1 { (i, v) } else { best },
            );
        let i = lo + off;
        if i > 0 && i + 1 < n && clean[i] >= clean[i - 1] && clean[i] >= clean[i + 1] {
            peak_indices.push(i);
        }
    }
    let intervals: Vec<f64> = onsets.windows(2).map(|w| w[1] - w[0]).collect();
    let heart_rate_bpm = 60.0 * intervals.len() as f64 / intervals.iter().sum::<f64>();

    let mut x = clean.clone();
    if let Some(snr) = spec.noise.white_snr_db {
        let sigma = (variance(&clean) / 10f64.powf(snr / 10.0)).sqrt();
        if sigma > 0.0 {
            let normal = Normal::new(0.0, sigma).expect("finite sigma");
            x.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
        }
    }
    if let Some(w) = spec.noise.baseline_wander {
        let phase = rng.random_range(0.0..2.0 * PI);
        for (i, v) in x.iter_mut().enumerate() {
            *v += w.amplitude * (2.0 * PI * w.freq_hz * i as f64 / fs + phase).sin();
        }
    }
    if let Some(m) = spec.noise.motion_burst {
        for _ in 0..m.count {
            let center = rng.random_range(0.0..spec.duration_s);
            let freq = rng.random_range(0.5..3.0);
            let phase = rng.random_range(0.0..2.0 * PI);
            for (i, v) in x.iter_mut().enumerate() {
                let t = i as f64 / fs;
                let z = (t - center) / m.width_s;
                if z.abs() < 6.0 {
                    *v += m.amplitude * (-0.5 * z * z).exp() * (2.0 * PI * freq * t + phase).sin();
                }
            }
        }
    }

    let label = spec.label();
    let mut segment = PpgSegment::new(x, fs)?;
    segment.label = Some(label);
    Ok((
        segment,
        label,
        GroundTruth {
            peak_indices,
            onset_times_s: onsets,
            heart_rate_bpm,
            clean,
        },
    ))
}

/// Randomized spec for corpus item `index`, drawn from its own stream
/// `seed + index`.
pub fn corpus_spec(base: &SynthSpec, good: bool, seed: u64, index: usize) -> SynthSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64));
    let mut spec = *base;
    spec.heart_rate_bpm = rng.random_range(55.0..=110.0);
    spec.hr_jitter_pct = rng.random_range(0.0..=5.0);
    spec.seed = rng.random();
    let wander = BaselineWander {
        amplitude: rng.random_range(0.0..=0.3),
        freq_hz: rng.random_range(0.05..=0.3),
    };
    spec.noise = if good {
        NoiseSpec {
            white_snr_db: Some(rng.random_range(15.0..=40.0)),
            baseline_wander: Some(wander),
            motion_burst: None,
        }
    } else if rng.random_bool(0.5) {
        NoiseSpec {
            white_snr_db: Some(rng.random_range(-10.0..=3.0)),
            baseline_wander: Some(wander),
            motion_burst: None,
        }
    } else {
        NoiseSpec {
            white_snr_db: Some(rng.random_range(15.0..=40.0)),
            baseline_wander: Some(wander),
            motion_burst: Some(MotionBurst {
                amplitude: rng.random_range(1.5..=3.0),
                count: rng.random_range(2..=5),
                width_s: rng.random_range(1.0..=3.0),
            }),
        }
    };
    spec
}

/// Per class: `floor(0.15 n)` validation, `floor(0.15 n)` test, rest train,
/// assigned in generation order.
pub fn stratified_split(position: usize, class_size: usize) -> Split {
    let held = (class_size as f64 * 0.15).floor() as usize;
    let train = class_size - 2 * held;
    if position < train {
        Split::Train
    } else if position < train + held {
        Split::Validation
    } else {
        Split::Test
    }
}

/// Writes `segments/seg_XXXXXX.csv` and `manifest.csv` under `out_dir`.
/// Good items come first (indices `0..n_good`), then Bad.
pub fn generate_corpus(
    n_good: usize,
    n_bad: usize,
    base: &SynthSpec,
    seed: u64,
    out_dir: &Path,
) -> Result<DatasetManifest, SynthError> {
    if n_good + n_bad < 2 {
        return Err(SynthError::InvalidSpec(
            "corpus needs at least two segments".into(),
        ));
    }
    base.validate()?;
    let seg_dir = out_dir.join("segments");
    fs::create_dir_all(&seg_dir).map_err(|source| SynthError::Io {
        path: seg_dir.clone(),
        source,
    })?;

    let entries = (0..n_good + n_bad)
        .into_par_iter()
        .map(|index| {
            let good = index < n_good;
            let spec = corpus_spec(base, good, seed, index);
            let (segment, label, _) = generate(&spec)?;
            let segment_id = format!("seg_{index:06}");
            let rel = PathBuf::from("segments").join(format!("{segment_id}.csv"));
            let path = out_dir.join(&rel);
            fs::write(&path, segment_csv(segment.samples()))
                .map_err(|source| SynthError::Io { path, source })?;
            let raw_label = match label {
                QualityLabel::Bad => RawLabel::Unfit,
                QualityLabel::Good if spec.noise.white_snr_db.is_none_or(|s| s >= EXCELLENT_SNR_DB) => {
                    RawLabel::Excellent
                }
                QualityLabel::Good => RawLabel::Acceptable,
            };
            let split = if good {
                stratified_split(index, n_good)
            } else {
                stratified_split(index - n_good, n_bad)
            };
            Ok(ManifestEntry {
                segment_id,
                path: rel,
                raw_label,
                split,
            })
        })
        .collect::<Result<Vec<_>, SynthError>>()?;

    let manifest = DatasetManifest {
        entries,
        base_dir: out_dir.to_path_buf(),
    };
    let path = out_dir.join("manifest.csv");
    fs::write(&path, manifest.to_csv()).map_err(|source| SynthError::Io { path, source })?;
    Ok(manifest)
}
