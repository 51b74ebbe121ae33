//! Chebyshev type II bandpass design and zero-phase application.
//!
//! Design path: analog Chebyshev II lowpass prototype of order `order / 2`
//! (normalized so the stopband begins at 1 rad/s), lowpass-to-bandpass
//! transform onto the prewarped stopband edges, bilinear transform, then
//! pole/zero pairing into second-order sections. Pairing follows the
//! "nearest zero" rule: the pole pair closest to the unit circle is paired
//! first with its nearest zeros and placed last in the cascade.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::data_io::PpgSegment;

/// Impulse-response level, relative to its peak, that defines the settle length.
const SETTLE_REL_TOL: f64 = 1e-3;
/// Upper bound on the impulse response simulated when measuring settle length.
const SETTLE_HORIZON: usize = 1 << 17;

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error("invalid filter spec: {0}")]
    InvalidSpec(String),
    #[error("numerical failure in filter design: {0}")]
    NumericalFailure(String),
    #[error("filter produced a non-finite output at sample {0}")]
    NonFiniteOutput(usize),
    #[error("cannot filter an empty signal")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    /// Total bandpass order; the analog prototype has order `order / 2`.
    pub order: usize,
    pub low_cut_hz: f64,
    pub high_cut_hz: f64,
    pub stopband_atten_db: f64,
    pub sample_rate_hz: f64,
    /// Lower stopband edge (attenuation reaches `stopband_atten_db` here).
    pub low_stop_hz: f64,
    /// Upper stopband edge.
    pub high_stop_hz: f64,
}

impl FilterSpec {
    pub const DEFAULT_ORDER: usize = 4;
    pub const DEFAULT_LOW_HZ: f64 = 0.5;
    pub const DEFAULT_HIGH_HZ: f64 = 10.0;
    pub const DEFAULT_ATTEN_DB: f64 = 20.0;

    /// 4th-order 0.5-10 Hz bandpass with 20 dB stopband at the given rate.
    pub fn ppg_bandpass(sample_rate_hz: f64) -> Self {
        Self::with_band(
            Self::DEFAULT_ORDER,
            Self::DEFAULT_LOW_HZ,
            Self::DEFAULT_HIGH_HZ,
            Self::DEFAULT_ATTEN_DB,
            sample_rate_hz,
        )
    }

    /// Stopband edges default to one octave below the low cut and 1.5x above
    /// the high cut.
    pub fn with_band(
        order: usize,
        low_cut_hz: f64,
        high_cut_hz: f64,
        stopband_atten_db: f64,
        sample_rate_hz: f64,
    ) -> Self {
        Self {
            order,
            low_cut_hz,
            high_cut_hz,
            stopband_atten_db,
            sample_rate_hz,
            low_stop_hz: low_cut_hz / 2.0,
            high_stop_hz: high_cut_hz * 1.5,
        }
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        let bad = |msg: String| Err(FilterError::InvalidSpec(msg));
        let finite = [
            self.low_cut_hz,
            self.high_cut_hz,
            self.stopband_atten_db,
            self.sample_rate_hz,
            self.low_stop_hz,
            self.high_stop_hz,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return bad("all frequencies and the attenuation must be finite".into());
        }
        if self.order == 0 || !self.order.is_multiple_of(2) {
            return bad(format!("order must be even and positive, got {}", self.order));
        }
        if self.sample_rate_hz <= 0.0 {
            return bad(format!(
                "sample rate must be positive, got {}",
                self.sample_rate_hz
            ));
        }
        if self.stopband_atten_db <= 0.0 {
            return bad(format!(
                "stopband attenuation must be positive, got {} dB",
                self.stopband_atten_db
            ));
        }
        let nyquist = self.sample_rate_hz / 2.0;
        if !(0.0 < self.low_cut_hz && self.low_cut_hz < self.high_cut_hz && self.high_cut_hz < nyquist) {
            return bad(format!(
                "need 0 < low ({}) < high ({}) < fs/2 ({})",
                self.low_cut_hz, self.high_cut_hz, nyquist
            ));
        }
        if !(0.0 < self.low_stop_hz
            && self.low_stop_hz <= self.low_cut_hz
            && self.high_cut_hz <= self.high_stop_hz
            && self.high_stop_hz < nyquist)
        {
            return bad(format!(
                "need 0 < low stop ({}) <= low ({}) and high ({}) <= high stop ({}) < fs/2 ({})",
                self.low_stop_hz, self.low_cut_hz, self.high_cut_hz, self.high_stop_hz, nyquist
            ));
        }
        Ok(())
    }
}

/// Second-order section with `a0 = 1`, transposed direct form II.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z_inv2 = z_inv * z_inv;
        (self.b0 + self.b1 * z_inv + self.b2 * z_inv2) / (1.0 + self.a1 * z_inv + self.a2 * z_inv2)
    }

    fn dc_gain(&self) -> f64 {
        (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2)
    }

    /// Roots of `z^2 + a1 z + a2`.
    pub fn poles(&self) -> [Complex64; 2] {
        let disc = Complex64::new(self.a1 * self.a1 - 4.0 * self.a2, 0.0).sqrt();
        [(-self.a1 + disc) / 2.0, (-self.a1 - disc) / 2.0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiquadCascade {
    pub sections: Vec<Biquad>,
    pub overall_gain: f64,
}

impl BiquadCascade {
    pub fn frequency_response(&self, freq_hz: f64, sample_rate_hz: f64) -> Complex64 {
        let w = 2.0 * PI * freq_hz / sample_rate_hz;
        let z_inv = Complex64::from_polar(1.0, -w);
        self.sections
            .iter()
            .fold(Complex64::new(self.overall_gain, 0.0), |acc, s| {
                acc * s.response(z_inv)
            })
    }

    pub fn magnitude_db(&self, freq_hz: f64, sample_rate_hz: f64) -> f64 {
        20.0 * self.frequency_response(freq_hz, sample_rate_hz).norm().log10()
    }

    pub fn poles(&self) -> Vec<Complex64> {
        self.sections.iter().flat_map(|s| s.poles()).collect()
    }

    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|p| p.norm() < 1.0)
    }

    /// Expanded `(b, a)` polynomials in `z^-1`, gain folded into `b`.
    pub fn transfer_function(&self) -> (Vec<f64>, Vec<f64>) {
        let mut b = vec![self.overall_gain];
        let mut a = vec![1.0];
        for s in &self.sections {
            b = poly_mul(&b, &[s.b0, s.b1, s.b2]);
            a = poly_mul(&a, &[1.0, s.a1, s.a2]);
        }
        (b, a)
    }

    /// Causal single pass from zero state.
    pub fn filter(&self, input: &[f64]) -> Vec<f64> {
        let mut state = vec![[0.0; 2]; self.sections.len()];
        input.iter().map(|&x| self.step(&mut state, x)).collect()
    }

    pub fn impulse_response(&self, len: usize) -> Vec<f64> {
        let mut state = vec![[0.0; 2]; self.sections.len()];
        (0..len)
            .map(|n| self.step(&mut state, if n == 0 { 1.0 } else { 0.0 }))
            .collect()
    }

    /// Samples until the impulse response stays below 1e-3 of its peak.
    pub fn settle_length(&self) -> usize {
        let mut state = vec![[0.0; 2]; self.sections.len()];
        let mut peak = 0.0f64;
        let mut last_above = 0usize;
        let mut quiet_run = 0usize;
        for n in 0..SETTLE_HORIZON {
            let h = self.step(&mut state, if n == 0 { 1.0 } else { 0.0 }).abs();
            peak = peak.max(h);
            if h >= SETTLE_REL_TOL * peak {
                last_above = n;
                quiet_run = 0;
            } else {
                quiet_run += 1;
                let energy: f64 = state.iter().map(|s| s[0].abs() + s[1].abs()).sum();
                if quiet_run > 16 && energy < SETTLE_REL_TOL * peak * 1e-3 {
                    break;
                }
            }
        }
        last_above + 1
    }

    #[inline]
    fn step(&self, state: &mut [[f64; 2]], x: f64) -> f64 {
        let mut v = x * self.overall_gain;
        for (s, z) in self.sections.iter().zip(state.iter_mut()) {
            let y = s.b0 * v + z[0];
            z[0] = s.b1 * v - s.a1 * y + z[1];
            z[1] = s.b2 * v - s.a2 * y;
            v = y;
        }
        v
    }

    /// Section states for a steady unit input, scaled per section by the DC
    /// gain of everything upstream.
    fn steady_state(&self) -> Vec<[f64; 2]> {
        let mut level = self.overall_gain;
        self.sections
            .iter()
            .map(|s| {
                let g = s.dc_gain();
                let z2 = (s.b2 - s.a2 * g) * level;
                let z1 = (s.b1 - s.a1 * g) * level + z2;
                level *= g;
                [z1, z2]
            })
            .collect()
    }

    fn filter_from_steady(&self, input: &[f64], zi: &[[f64; 2]]) -> Vec<f64> {
        let x0 = input.first().copied().unwrap_or(0.0);
        let mut state: Vec<[f64; 2]> = zi.iter().map(|z| [z[0] * x0, z[1] * x0]).collect();
        input.iter().map(|&x| self.step(&mut state, x)).collect()
    }
}

fn poly_mul(p: &[f64], q: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.len() + q.len() - 1];
    for (i, a) in p.iter().enumerate() {
        for (j, b) in q.iter().enumerate() {
            out[i + j] += a * b;
        }
    }
    out
}

struct Zpk {
    zeros: Vec<Complex64>,
    poles: Vec<Complex64>,
    gain: f64,
}

/// Chebyshev II analog lowpass prototype with the stopband edge at 1 rad/s.
fn cheby2_prototype(n: usize, atten_db: f64) -> Zpk {
    let de = 1.0 / (10f64.powf(0.1 * atten_db) - 1.0).sqrt();
    let mu = (1.0 / de).asinh() / n as f64;
    let n_i = n as i64;
    let ms: Vec<i64> = (0..n_i).map(|i| -n_i + 1 + 2 * i).collect();

    let zeros: Vec<Complex64> = ms
        .iter()
        .filter(|&&m| m != 0)
        .map(|&m| Complex64::new(0.0, 1.0 / (m as f64 * PI / (2.0 * n as f64)).sin()))
        .collect();
    let poles: Vec<Complex64> = ms
        .iter()
        .map(|&m| {
            let p = -Complex64::from_polar(1.0, PI * m as f64 / (2.0 * n as f64));
            Complex64::new(mu.sinh() * p.re, mu.cosh() * p.im).inv()
        })
        .collect();
    let num: Complex64 = poles.iter().map(|p| -p).product();
    let den: Complex64 = zeros.iter().map(|z| -z).product();
    Zpk {
        gain: (num / den).re,
        zeros,
        poles,
    }
}

fn lowpass_to_bandpass(proto: Zpk, center: f64, bandwidth: f64) -> Zpk {
    let degree = proto.poles.len() - proto.zeros.len();
    let w0sq = Complex64::new(center * center, 0.0);
    let split = |roots: &[Complex64]| -> Vec<Complex64> {
        let scaled: Vec<Complex64> = roots.iter().map(|r| r * (bandwidth / 2.0)).collect();
        let plus = scaled.iter().map(|r| r + (r * r - w0sq).sqrt());
        let minus = scaled.iter().map(|r| r - (r * r - w0sq).sqrt());
        plus.chain(minus).collect()
    };
    let mut zeros = split(&proto.zeros);
    zeros.extend(std::iter::repeat_n(Complex64::new(0.0, 0.0), degree));
    Zpk {
        zeros,
        poles: split(&proto.poles),
        gain: proto.gain * bandwidth.powi(degree as i32),
    }
}

fn bilinear(analog: Zpk, sample_rate_hz: f64) -> Zpk {
    let fs2 = 2.0 * sample_rate_hz;
    let degree = analog.poles.len() - analog.zeros.len();
    let map = |r: &Complex64| (fs2 + r) / (fs2 - r);
    let mut zeros: Vec<Complex64> = analog.zeros.iter().map(map).collect();
    zeros.extend(std::iter::repeat_n(Complex64::new(-1.0, 0.0), degree));
    let poles = analog.poles.iter().map(map).collect();
    let num: Complex64 = analog.zeros.iter().map(|z| fs2 - z).product();
    let den: Complex64 = analog.poles.iter().map(|p| fs2 - p).product();
    Zpk {
        zeros,
        poles,
        gain: analog.gain * (num / den).re,
    }
}

const REAL_TOL: f64 = 1e-10;

fn is_real(c: &Complex64) -> bool {
    c.im.abs() <= REAL_TOL * c.norm().max(1.0)
}

/// Removes and returns the element of `pool` nearest to `target`, optionally
/// restricted to (nearly) real values.
fn take_nearest(pool: &mut Vec<Complex64>, target: Complex64, real_only: bool) -> Option<Complex64> {
    let idx = pool
        .iter()
        .enumerate()
        .filter(|(_, c)| !real_only || is_real(c))
        .min_by(|(_, a), (_, b)| (*a - target).norm().total_cmp(&(*b - target).norm()))
        .map(|(i, _)| i)?;
    Some(pool.swap_remove(idx))
}

fn pair_sections(digital: Zpk) -> Result<BiquadCascade, FilterError> {
    let mut poles = digital.poles;
    let mut zeros = digital.zeros;
    if !poles.len().is_multiple_of(2) || zeros.len() > poles.len() {
        return Err(FilterError::NumericalFailure(format!(
            "cannot pair {} poles with {} zeros",
            poles.len(),
            zeros.len()
        )));
    }
    zeros.resize(poles.len(), Complex64::new(0.0, 0.0));

    let fail = |what: &str| FilterError::NumericalFailure(format!("no partner for {what}"));
    let mut picked = Vec::with_capacity(poles.len() / 2);
    while !poles.is_empty() {
        // Worst (closest to the unit circle) pole first.
        let p1 = take_nearest_circle(&mut poles);
        let p2 = if is_real(&p1) {
            take_nearest(&mut poles, p1, true).ok_or_else(|| fail("real pole"))?
        } else {
            take_nearest(&mut poles, p1.conj(), false).ok_or_else(|| fail("complex pole"))?
        };
        let z1 = take_nearest(&mut zeros, p1, false).ok_or_else(|| fail("zero"))?;
        let z2 = if is_real(&z1) {
            take_nearest(&mut zeros, p1, true).ok_or_else(|| fail("real zero"))?
        } else {
            take_nearest(&mut zeros, z1.conj(), false).ok_or_else(|| fail("complex zero"))?
        };
        if is_real(&p1) != is_real(&p2) || (!is_real(&p1) && (p1 - p2.conj()).norm() > 1e-8) {
            return Err(fail("conjugate pole"));
        }
        picked.push(Biquad {
            b0: 1.0,
            b1: -(z1 + z2).re,
            b2: (z1 * z2).re,
            a1: -(p1 + p2).re,
            a2: (p1 * p2).re,
        });
    }
    picked.reverse();
    Ok(BiquadCascade {
        sections: picked,
        overall_gain: digital.gain,
    })
}

fn take_nearest_circle(poles: &mut Vec<Complex64>) -> Complex64 {
    let idx = poles
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| (1.0 - a.norm()).abs().total_cmp(&(1.0 - b.norm()).abs()))
        .map(|(i, _)| i)
        .expect("nonempty pole list");
    poles.swap_remove(idx)
}

/// Designs the Chebyshev II bandpass as a stable biquad cascade.
pub fn design_cheby2_bandpass(spec: &FilterSpec) -> Result<BiquadCascade, FilterError> {
    spec.validate()?;
    let fs = spec.sample_rate_hz;
    let prewarp = |f: f64| 2.0 * fs * (PI * f / fs).tan();
    let w_lo = prewarp(spec.low_stop_hz);
    let w_hi = prewarp(spec.high_stop_hz);

    let proto = cheby2_prototype(spec.order / 2, spec.stopband_atten_db);
    let analog = lowpass_to_bandpass(proto, (w_lo * w_hi).sqrt(), w_hi - w_lo);
    let digital = bilinear(analog, fs);
    let cascade = pair_sections(digital)?;
    if !cascade.overall_gain.is_finite() || !cascade.is_stable() {
        return Err(FilterError::NumericalFailure(
            "designed cascade is unstable".into(),
        ));
    }
    Ok(cascade)
}

/// Zero-phase filtering of a raw sample slice.
///
/// The mean is removed first: an even-order Chebyshev II response has a
/// nonzero stopband floor at 0 Hz, and DC must not leak into the output.
/// The signal is then odd-reflection padded by `min(3 * settle, len - 1)`
/// samples on each side and run forward and backward, each pass starting
/// from the steady state of its first sample.
pub fn filtfilt(cascade: &BiquadCascade, input: &[f64]) -> Result<Vec<f64>, FilterError> {
    if input.is_empty() {
        return Err(FilterError::EmptyInput);
    }
    let n = input.len();
    let mean = input.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = input.iter().map(|v| v - mean).collect();
    if n == 1 {
        return Ok(vec![0.0]);
    }

    let pad = (3 * cascade.settle_length()).min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    let (first, last) = (centered[0], centered[n - 1]);
    ext.extend((1..=pad).rev().map(|i| 2.0 * first - centered[i]));
    ext.extend_from_slice(&centered);
    ext.extend((1..=pad).map(|i| 2.0 * last - centered[n - 1 - i]));

    let zi = cascade.steady_state();
    let mut fwd = cascade.filter_from_steady(&ext, &zi);
    fwd.reverse();
    let mut back = cascade.filter_from_steady(&fwd, &zi);
    back.reverse();

    let out: Vec<f64> = back[pad..pad + n].to_vec();
    if let Some(i) = out.iter().position(|v| !v.is_finite()) {
        return Err(FilterError::NonFiniteOutput(i));
    }
    Ok(out)
}

/// Zero-phase filtering of a segment; metadata is carried over.
pub fn filter_forward_backward(
    cascade: &BiquadCascade,
    segment: &PpgSegment,
) -> Result<PpgSegment, FilterError> {
    let out = filtfilt(cascade, segment.samples())?;
    segment
        .with_samples(out)
        .map_err(|e| FilterError::NumericalFailure(e.to_string()))
}
