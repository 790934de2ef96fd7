use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::TARGET_RATE_HZ;

/// Linear-interpolation resampler onto a 64 Hz grid.
///
/// The output has `round(duration * 64)` samples, sample `j` taken at time
/// `j / 64` s; positions past the last input sample hold the last value.
pub fn resample_to_64hz<T: Scalar>(samples: &[T], rate_hz: f64) -> Result<Vec<T>> {
    if samples.is_empty() {
        return Err(Error::invalid("cannot resample an empty channel"));
    }
    if !(rate_hz > 0.0 && rate_hz.is_finite()) {
        return Err(Error::invalid(format!("sample rate must be positive, got {rate_hz}")));
    }
    if rate_hz == TARGET_RATE_HZ {
        return Ok(samples.to_vec());
    }
    let duration = samples.len() as f64 / rate_hz;
    let out_len = (duration * TARGET_RATE_HZ).round() as usize;
    let last = samples.len() - 1;
    let step = rate_hz / TARGET_RATE_HZ;
    Ok((0..out_len)
        .map(|j| {
            let pos = j as f64 * step;
            let i = pos.floor() as usize;
            if i >= last {
                return samples[last];
            }
            let frac = T::lit(pos - i as f64);
            samples[i] + (samples[i + 1] - samples[i]) * frac
        })
        .collect())
}

/// Discrete first-order Butterworth low-pass obtained by the bilinear
/// transform with frequency prewarping, so the response is exactly -3 dB at
/// the cutoff and 1 at DC.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FirstOrderLowpass<T> {
    pub b0: T,
    pub b1: T,
    pub a1: T,
}

impl<T: Scalar> FirstOrderLowpass<T> {
    pub fn design(cutoff_hz: f64, rate_hz: f64) -> Result<Self> {
        if !(cutoff_hz > 0.0 && cutoff_hz < rate_hz / 2.0) {
            return Err(Error::invalid(format!(
                "cutoff {cutoff_hz} Hz outside (0, {}) for rate {rate_hz} Hz",
                rate_hz / 2.0
            )));
        }
        let k = (std::f64::consts::PI * cutoff_hz / rate_hz).tan();
        let b = k / (1.0 + k);
        Ok(Self { b0: T::lit(b), b1: T::lit(b), a1: T::lit((k - 1.0) / (k + 1.0)) })
    }

    /// Filters the whole sequence, starting from the steady state of the
    /// first sample so constant input passes through untouched.
    pub fn apply(&self, samples: &[T]) -> Vec<T> {
        let Some(&first) = samples.first() else {
            return Vec::new();
        };
        let mut x_prev = first;
        let mut y_prev = first;
        samples
            .iter()
            .map(|&x| {
                let y = self.b0 * x + self.b1 * x_prev - self.a1 * y_prev;
                x_prev = x;
                y_prev = y;
                y
            })
            .collect()
    }

    /// Magnitude response at `freq_hz`.
    pub fn gain_at(&self, freq_hz: f64, rate_hz: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * freq_hz / rate_hz;
        let (b0, b1, a1) = (self.b0.as_f64(), self.b1.as_f64(), self.a1.as_f64());
        let num_re = b0 + b1 * w.cos();
        let num_im = -b1 * w.sin();
        let den_re = 1.0 + a1 * w.cos();
        let den_im = -a1 * w.sin();
        ((num_re * num_re + num_im * num_im) / (den_re * den_re + den_im * den_im)).sqrt()
    }
}

pub fn lowpass_first_order<T: Scalar>(samples: &[T], cutoff_hz: f64, rate_hz: f64) -> Result<Vec<T>> {
    Ok(FirstOrderLowpass::design(cutoff_hz, rate_hz)?.apply(samples))
}
