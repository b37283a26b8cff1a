//! Butterworth low-pass design and zero-phase filtering.
//!
//! Filters are stored as cascades of second-order sections in transposed
//! direct form II. `filtfilt` runs the cascade forward and backward over an
//! odd-reflected extension of the signal with steady-state initial
//! conditions, so the effective response is `|H|^2` with zero phase.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Requested filter, stated as the effective (forward-backward) order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub effective_order: usize,
    pub cutoff_hz: f64,
    pub sample_rate_hz: f64,
}

impl FilterSpec {
    /// Tenth-order effective low-pass, the form used throughout the analysis.
    pub fn tenth_order(cutoff_hz: f64, sample_rate_hz: f64) -> Self {
        Self {
            effective_order: 10,
            cutoff_hz,
            sample_rate_hz,
        }
    }

    pub fn design_order(&self) -> usize {
        self.effective_order / 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.effective_order == 0 || !self.effective_order.is_multiple_of(2) {
            return Err(Error::InvalidFilter(format!(
                "effective order must be a positive even number, got {}",
                self.effective_order
            )));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::InvalidFilter(format!("bad sample rate {}", self.sample_rate_hz)));
        }
        let nyquist = self.sample_rate_hz / 2.0;
        if !(self.cutoff_hz > 0.0 && self.cutoff_hz < nyquist) {
            return Err(Error::InvalidFilter(format!(
                "cutoff {} Hz must lie in (0, {nyquist}) Hz",
                self.cutoff_hz
            )));
        }
        Ok(())
    }
}

/// One second-order section, `a0` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    fn dc_gain(&self) -> f64 {
        (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2)
    }

    /// State that makes the section output constant for a constant input `x`.
    fn steady_state(&self, x: f64) -> [f64; 2] {
        let y = self.dc_gain() * x;
        [y - self.b0 * x, self.b2 * x - self.a2 * y]
    }

    fn response(&self, omega: f64) -> (f64, f64) {
        // H(e^{jw}) = (b0 + b1 e^{-jw} + b2 e^{-2jw}) / (1 + a1 e^{-jw} + a2 e^{-2jw})
        let (s1, c1) = omega.sin_cos();
        let (s2, c2) = (2.0 * omega).sin_cos();
        let num = (self.b0 + self.b1 * c1 + self.b2 * c2, -(self.b1 * s1 + self.b2 * s2));
        let den = (1.0 + self.a1 * c1 + self.a2 * c2, -(self.a1 * s1 + self.a2 * s2));
        (num.0 * num.0 + num.1 * num.1, den.0 * den.0 + den.1 * den.1)
    }

    /// Pole radii of the section.
    fn pole_magnitudes(&self) -> [f64; 2] {
        let disc = self.a1 * self.a1 - 4.0 * self.a2;
        if disc < 0.0 {
            let r = self.a2.sqrt();
            [r, r]
        } else {
            let root = disc.sqrt();
            [((-self.a1 + root) / 2.0).abs(), ((-self.a1 - root) / 2.0).abs()]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiquadCascade {
    pub sections: Vec<Biquad>,
    /// Overall gain; sections are individually normalized so this is 1.
    pub gain: f64,
    pub design_order: usize,
    pub sample_rate_hz: f64,
}

impl BiquadCascade {
    /// Edge padding used by [`filtfilt`]: three times the filter's state length.
    pub fn pad_len(&self) -> usize {
        3 * (2 * self.design_order)
    }

    /// Single-pass magnitude response at `freq_hz`.
    pub fn magnitude(&self, freq_hz: f64) -> f64 {
        let omega = 2.0 * PI * freq_hz / self.sample_rate_hz;
        let (num, den) = self
            .sections
            .iter()
            .map(|s| s.response(omega))
            .fold((1.0, 1.0), |(n, d), (sn, sd)| (n * sn, d * sd));
        self.gain * (num / den).sqrt()
    }

    pub fn magnitude_db(&self, freq_hz: f64) -> f64 {
        20.0 * self.magnitude(freq_hz).log10()
    }

    pub fn is_stable(&self) -> bool {
        self.sections
            .iter()
            .all(|s| s.pole_magnitudes().iter().all(|&r| r < 1.0))
    }

    /// Causal single pass with the given per-section initial states.
    fn run(&self, x: &mut [f64], init: Option<f64>) {
        let mut input_level = init.unwrap_or(0.0) * self.gain;
        for section in &self.sections {
            let mut state = match init {
                Some(_) => section.steady_state(input_level),
                None => [0.0, 0.0],
            };
            input_level *= section.dc_gain();
            for sample in x.iter_mut() {
                let input = *sample;
                let y = section.b0 * input + state[0];
                state[0] = section.b1 * input - section.a1 * y + state[1];
                state[1] = section.b2 * input - section.a2 * y;
                *sample = y;
            }
        }
        if self.gain != 1.0 {
            x.iter_mut().for_each(|v| *v *= self.gain);
        }
    }

    /// Causal filtering from a zero initial state.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        self.run(&mut y, None);
        y
    }
}

/// Digital Butterworth low-pass of order `effective_order / 2`.
///
/// Analog prototype poles are pre-warped to the requested cutoff, mapped
/// with the bilinear transform and paired into sections with unit DC gain.
pub fn butter_lowpass(spec: &FilterSpec) -> Result<BiquadCascade> {
    spec.validate()?;
    let n = spec.design_order();
    let fs = spec.sample_rate_hz;
    let warped = 2.0 * fs * (PI * spec.cutoff_hz / fs).tan();
    let k = 2.0 * fs;

    let bilinear = |re: f64, im: f64| -> (f64, f64) {
        // z = (k + s) / (k - s)
        let (nr, ni) = (k + re, im);
        let (dr, di) = (k - re, -im);
        let d = dr * dr + di * di;
        ((nr * dr + ni * di) / d, (ni * dr - nr * di) / d)
    };

    let mut sections = Vec::with_capacity(n.div_ceil(2));
    for idx in 0..n / 2 {
        let angle = PI * (2 * idx + n + 1) as f64 / (2 * n) as f64;
        let (zr, zi) = bilinear(warped * angle.cos(), warped * angle.sin());
        let a1 = -2.0 * zr;
        let a2 = zr * zr + zi * zi;
        let g = (1.0 + a1 + a2) / 4.0;
        sections.push(Biquad {
            b0: g,
            b1: 2.0 * g,
            b2: g,
            a1,
            a2,
        });
    }
    if n % 2 == 1 {
        let (zr, _) = bilinear(-warped, 0.0);
        let g = (1.0 - zr) / 2.0;
        sections.push(Biquad {
            b0: g,
            b1: g,
            b2: 0.0,
            a1: -zr,
            a2: 0.0,
        });
    }

    Ok(BiquadCascade {
        sections,
        gain: 1.0,
        design_order: n,
        sample_rate_hz: fs,
    })
}

/// Zero-phase forward-backward filtering. Output has the input's length.
pub fn filtfilt(x: &[f64], filter: &BiquadCascade) -> Result<Vec<f64>> {
    let pad = filter.pad_len();
    if x.len() <= pad {
        return Err(Error::SignalTooShort { len: x.len(), min: pad });
    }
    let n = x.len();
    let (first, last) = (x[0], x[n - 1]);

    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * first - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * last - x[n - 1 - i]));

    let start = ext[0];
    filter.run(&mut ext, Some(start));
    ext.reverse();
    let start = ext[0];
    filter.run(&mut ext, Some(start));
    ext.reverse();

    Ok(ext[pad..pad + n].to_vec())
}

/// Designs the tenth-order effective filter and applies it zero-phase.
pub fn lowpass_zero_phase(x: &[f64], cutoff_hz: f64, sample_rate_hz: f64) -> Result<Vec<f64>> {
    let filter = butter_lowpass(&FilterSpec::tenth_order(cutoff_hz, sample_rate_hz))?;
    filtfilt(x, &filter)
}

/// Central differences inside, second-order one-sided differences at the ends.
pub fn derivative(x: &[f64], sample_rate: f64) -> Vec<f64> {
    let n = x.len();
    assert!(n >= 3, "derivative needs at least 3 samples, got {n}");
    let half = 0.5 * sample_rate;
    let mut d = Vec::with_capacity(n);
    d.push((-3.0 * x[0] + 4.0 * x[1] - x[2]) * half);
    d.extend(x.windows(3).map(|w| (w[2] - w[0]) * half));
    d.push((3.0 * x[n - 1] - 4.0 * x[n - 2] + x[n - 3]) * half);
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const FS: f64 = 1000.0;

    fn sine(freq: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * freq * i as f64 / FS).sin()).collect()
    }

    #[test]
    fn cutoff_is_half_power() {
        for cutoff in [5.0, 20.0, 100.0] {
            let f = butter_lowpass(&FilterSpec::tenth_order(cutoff, FS)).unwrap();
            assert_abs_diff_eq!(f.magnitude_db(cutoff), -3.0103, epsilon = 0.01);
            assert_abs_diff_eq!(f.magnitude(0.0), 1.0, epsilon = 1e-9);
            assert!(f.is_stable());
            assert_eq!(f.sections.len(), 3);
        }
    }

    #[test]
    fn stopband_of_5hz_filter() {
        let f = butter_lowpass(&FilterSpec::tenth_order(5.0, FS)).unwrap();
        assert!(f.magnitude_db(50.0) <= -100.0, "{}", f.magnitude_db(50.0));
    }

    #[test]
    fn odd_and_even_orders() {
        for order in [2, 4, 6, 8, 12] {
            let f = butter_lowpass(&FilterSpec {
                effective_order: order,
                cutoff_hz: 30.0,
                sample_rate_hz: FS,
            })
            .unwrap();
            assert_eq!(f.sections.len(), (order / 2).div_ceil(2));
            assert_abs_diff_eq!(f.magnitude_db(30.0), -3.0103, epsilon = 0.01);
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(butter_lowpass(&FilterSpec::tenth_order(500.0, FS)).is_err());
        assert!(butter_lowpass(&FilterSpec::tenth_order(0.0, FS)).is_err());
        assert!(butter_lowpass(&FilterSpec {
            effective_order: 5,
            cutoff_hz: 20.0,
            sample_rate_hz: FS
        })
        .is_err());
    }

    #[test]
    fn constant_passes_unchanged() {
        let f = butter_lowpass(&FilterSpec::tenth_order(5.0, FS)).unwrap();
        let y = filtfilt(&vec![3.25; 400], &f).unwrap();
        for v in y {
            assert_abs_diff_eq!(v, 3.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn short_signal_is_an_error() {
        let f = butter_lowpass(&FilterSpec::tenth_order(20.0, FS)).unwrap();
        assert!(matches!(
            filtfilt(&[1.0; 30], &f),
            Err(Error::SignalTooShort { len: 30, min: 30 })
        ));
        assert!(filtfilt(&[1.0; 31], &f).is_ok());
    }

    #[test]
    fn squared_magnitude_attenuation() {
        let f = butter_lowpass(&FilterSpec::tenth_order(20.0, FS)).unwrap();
        for freq in [2.0, 15.0] {
            let x = sine(freq, 6000);
            let y = filtfilt(&x, &f).unwrap();
            // amplitude over the middle, away from edge effects
            let amp = |v: &[f64]| v[2000..4000].iter().fold(0.0f64, |m, s| m.max(s.abs()));
            let expected = f.magnitude(freq).powi(2);
            assert!((amp(&y) / amp(&x) - expected).abs() / expected < 0.01);
        }
    }

    #[test]
    fn derivative_examples() {
        let ramp: Vec<f64> = (0..50).map(|i| 0.5 * i as f64 / FS).collect();
        for d in derivative(&ramp, FS) {
            assert_abs_diff_eq!(d, 0.5, epsilon = 1e-9);
        }
        assert!(derivative(&[2.0; 10], FS).iter().all(|&d| d == 0.0));

        let x = sine(1.0, 1001);
        let d = derivative(&x, FS);
        let max_err = d
            .iter()
            .enumerate()
            .map(|(i, v)| (v - 2.0 * PI * (2.0 * PI * i as f64 / FS).cos()).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 1e-3, "{max_err}");
    }
}
