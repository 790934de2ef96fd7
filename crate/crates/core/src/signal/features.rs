//! The frozen 67-entry feature catalog.
//!
//! Seven streams (the six channels plus acceleration magnitude) each get
//! mean, std, min, max, range, RMS, skewness and excess kurtosis (56).
//! Acceleration magnitude, BVP and EDA each get band energy up to 8 Hz and
//! dominant frequency (6). Then EDA slope, TEMP slope, zero crossings of
//! the centred acceleration magnitude, BVP relative band power in
//! 0.7-3.5 Hz, and EDA peak count (5).

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::data::N_FEATURES;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{Channel, Window, TARGET_RATE_HZ, WINDOW_SAMPLES};

pub const CATALOG_VERSION: &str = "v1";

const STREAMS: [&str; 7] = ["acc_x", "acc_y", "acc_z", "bvp", "eda", "temp", "acc_mag"];
const STATS: [&str; 8] = ["mean", "std", "min", "max", "range", "rms", "skew", "kurt"];
const SPECTRAL_STREAMS: [&str; 3] = ["acc_mag", "bvp", "eda"];
const EXTRAS: [&str; 5] =
    ["eda_slope", "temp_slope", "acc_mag_zero_crossings", "bvp_band_power", "eda_peak_count"];

const BAND_ENERGY_MAX_HZ: f64 = 8.0;
const BVP_BAND_HZ: (f64, f64) = (0.7, 3.5);

#[derive(Clone)]
pub struct FeatureCatalog {
    names: Vec<String>,
    fft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for FeatureCatalog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FeatureCatalog")
            .field("version", &CATALOG_VERSION)
            .field("len", &self.names.len())
            .finish()
    }
}

impl Default for FeatureCatalog {
    fn default() -> Self {
        Self::v1()
    }
}

impl FeatureCatalog {
    pub fn v1() -> Self {
        let mut names = Vec::with_capacity(N_FEATURES);
        for s in STREAMS {
            for st in STATS {
                names.push(format!("{s}_{st}"));
            }
        }
        for s in SPECTRAL_STREAMS {
            names.push(format!("{s}_band_energy"));
            names.push(format!("{s}_dominant_freq"));
        }
        names.extend(EXTRAS.iter().map(|s| s.to_string()));
        debug_assert_eq!(names.len(), N_FEATURES);
        let fft = FftPlanner::new().plan_fft_forward(WINDOW_SAMPLES);
        Self { names, fft }
    }

    pub fn version(&self) -> &'static str {
        CATALOG_VERSION
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    fn power_spectrum(&self, x: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.fft.process(&mut buf);
        let n2 = (x.len() * x.len()) as f64;
        buf[..=x.len() / 2].iter().map(|c| c.norm_sqr() / n2).collect()
    }
}

struct Moments<T> {
    mean: T,
    std: T,
    min: T,
    max: T,
    rms: T,
    skew: T,
    kurt: T,
}

fn moments<T: Scalar>(x: &[T]) -> Moments<T> {
    let n = T::from_usize_lossy(x.len());
    let mean = x.iter().copied().sum::<T>() / n;
    let (mut m2, mut m3, mut m4, mut sq) = (T::zero(), T::zero(), T::zero(), T::zero());
    let (mut min, mut max) = (x[0], x[0]);
    for &v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 = m2 + d2;
        m3 = m3 + d2 * d;
        m4 = m4 + d2 * d2;
        sq = sq + v * v;
        min = min.min(v);
        max = max.max(v);
    }
    m2 = m2 / n;
    m3 = m3 / n;
    m4 = m4 / n;
    let std = m2.sqrt();
    let (skew, kurt) = if m2 > T::zero() {
        (m3 / (m2 * std), m4 / (m2 * m2) - T::lit(3.0))
    } else {
        (T::zero(), T::zero())
    };
    Moments { mean, std, min, max, rms: (sq / n).sqrt(), skew, kurt }
}

/// Least-squares slope in units per second.
fn slope<T: Scalar>(x: &[T]) -> T {
    let n = x.len() as f64;
    let t_mean = (n - 1.0) / 2.0 / TARGET_RATE_HZ;
    let y_mean = x.iter().map(|v| v.as_f64()).sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (i, v) in x.iter().enumerate() {
        let dt = i as f64 / TARGET_RATE_HZ - t_mean;
        num += dt * (v.as_f64() - y_mean);
        den += dt * dt;
    }
    T::lit(num / den)
}

fn zero_crossings<T: Scalar>(x: &[T], centre: T) -> usize {
    x.windows(2).filter(|w| (w[0] - centre) * (w[1] - centre) < T::zero()).count()
}

fn peak_count<T: Scalar>(x: &[T], mean: T, std: T) -> usize {
    if std <= T::zero() {
        return 0;
    }
    let floor = mean + T::lit(0.5) * std;
    x.windows(3).filter(|w| w[1] > w[0] && w[1] >= w[2] && w[1] > floor).count()
}

fn bin_hz(k: usize) -> f64 {
    k as f64 * TARGET_RATE_HZ / WINDOW_SAMPLES as f64
}

/// (band energy up to 8 Hz, dominant frequency) of a power spectrum;
/// the DC bin is excluded from both.
fn spectral_pair(power: &[f64]) -> (f64, f64) {
    let energy = power
        .iter()
        .enumerate()
        .skip(1)
        .take_while(|(k, _)| bin_hz(*k) <= BAND_ENERGY_MAX_HZ)
        .map(|(_, p)| p)
        .sum();
    let mut best = (0usize, 0.0f64);
    for (k, &p) in power.iter().enumerate().skip(1) {
        if p > best.1 {
            best = (k, p);
        }
    }
    (energy, bin_hz(best.0))
}

/// Computes the catalog's 67 features of one window, in catalog order.
pub fn extract_features<T: Scalar>(window: &Window<'_, T>, catalog: &FeatureCatalog) -> Result<Vec<T>> {
    for c in Channel::ALL {
        let s = window.channel(c);
        if s.len() != WINDOW_SAMPLES {
            return Err(Error::invalid(format!(
                "channel {c} slice has {} samples, expected {WINDOW_SAMPLES}",
                s.len()
            )));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("channel {c} contains a non-finite sample")));
        }
    }
    let (ax, ay, az) = (window.channel(Channel::AccX), window.channel(Channel::AccY), window.channel(Channel::AccZ));
    let mag: Vec<T> = (0..WINDOW_SAMPLES)
        .map(|i| (ax[i] * ax[i] + ay[i] * ay[i] + az[i] * az[i]).sqrt())
        .collect();
    let streams: [&[T]; 7] = [
        ax,
        ay,
        az,
        window.channel(Channel::Bvp),
        window.channel(Channel::Eda),
        window.channel(Channel::Temp),
        &mag,
    ];

    let mut out = Vec::with_capacity(N_FEATURES);
    let mut stream_moments = Vec::with_capacity(streams.len());
    for s in streams {
        let m = moments(s);
        out.extend([m.mean, m.std, m.min, m.max, m.max - m.min, m.rms, m.skew, m.kurt]);
        stream_moments.push(m);
    }

    let spectral_inputs: [&[T]; 3] = [&mag, streams[3], streams[4]];
    let mut bvp_power = Vec::new();
    for (i, s) in spectral_inputs.iter().enumerate() {
        let as_f64: Vec<f64> = s.iter().map(|v| v.as_f64()).collect();
        let power = catalog.power_spectrum(&as_f64);
        let (energy, dominant) = spectral_pair(&power);
        out.push(T::lit(energy));
        out.push(T::lit(dominant));
        if i == 1 {
            bvp_power = power;
        }
    }

    let eda_m = &stream_moments[4];
    let mag_m = &stream_moments[6];
    out.push(slope(streams[4]));
    out.push(slope(streams[5]));
    out.push(T::from_usize_lossy(zero_crossings(&mag, mag_m.mean)));
    let total: f64 = bvp_power.iter().skip(1).sum();
    let band: f64 = bvp_power
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(k, _)| (BVP_BAND_HZ.0..=BVP_BAND_HZ.1).contains(&bin_hz(*k)))
        .map(|(_, p)| p)
        .sum();
    out.push(T::lit(if total > 0.0 { band / total } else { 0.0 }));
    out.push(T::from_usize_lossy(peak_count(streams[4], eda_m.mean, eda_m.std)));

    debug_assert_eq!(out.len(), N_FEATURES);
    if let Some(i) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("feature {} is not finite", catalog.names()[i])));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn owned(f: impl Fn(Channel, usize) -> f64) -> Vec<Vec<f64>> {
        Channel::ALL.iter().map(|&c| (0..WINDOW_SAMPLES).map(|i| f(c, i)).collect()).collect()
    }

    fn window(data: &[Vec<f64>]) -> Window<'_, f64> {
        Window {
            minute_index: 0,
            slices: [&data[0], &data[1], &data[2], &data[3], &data[4], &data[5]],
        }
    }

    fn noisy(c: Channel, i: usize) -> f64 {
        let t = i as f64 / 64.0;
        let k = c as usize as f64;
        (2.0 * std::f64::consts::PI * (1.0 + k) * t).sin() + 0.3 * ((i * 7919 + c as usize * 31) % 97) as f64 / 97.0 + k
    }

    #[test]
    fn catalog_is_frozen() {
        let c = FeatureCatalog::v1();
        assert_eq!(c.len(), N_FEATURES);
        let mut names = c.names().to_vec();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), N_FEATURES);
        assert_eq!(c.names()[0], "acc_x_mean");
        assert_eq!(c.names()[55], "acc_mag_kurt");
        assert_eq!(c.names()[66], "eda_peak_count");
    }

    #[test]
    fn zero_window_gives_zero_moments_and_energy() {
        let data = owned(|_, _| 0.0);
        let f = extract_features(&window(&data), &FeatureCatalog::v1()).unwrap();
        assert_eq!(f.len(), N_FEATURES);
        assert!(f[..56].iter().all(|&v| v == 0.0));
        let cat = FeatureCatalog::v1();
        for s in SPECTRAL_STREAMS {
            assert_eq!(f[cat.index_of(&format!("{s}_band_energy")).unwrap()], 0.0);
        }
    }

    #[test]
    fn deterministic() {
        let data = owned(noisy);
        let cat = FeatureCatalog::v1();
        assert_eq!(extract_features(&window(&data), &cat).unwrap(), extract_features(&window(&data), &cat).unwrap());
    }

    #[test]
    fn scale_equivariant_features_double_exactly() {
        let data = owned(noisy);
        let doubled: Vec<Vec<f64>> = data.iter().map(|s| s.iter().map(|v| v * 2.0).collect()).collect();
        let cat = FeatureCatalog::v1();
        let a = extract_features(&window(&data), &cat).unwrap();
        let b = extract_features(&window(&doubled), &cat).unwrap();
        for s in STREAMS {
            for st in ["mean", "std", "rms"] {
                let i = cat.index_of(&format!("{s}_{st}")).unwrap();
                assert_eq!(b[i], 2.0 * a[i], "{s}_{st}");
            }
        }
    }

    #[test]
    fn dominant_frequency_finds_tone() {
        let data = owned(|c, i| {
            let f = if c == Channel::Bvp { 1.5 } else { 0.0 };
            (2.0 * std::f64::consts::PI * f * i as f64 / 64.0).sin()
        });
        let cat = FeatureCatalog::v1();
        let f = extract_features(&window(&data), &cat).unwrap();
        let i = cat.index_of("bvp_dominant_freq").unwrap();
        assert!((f[i] - 1.5).abs() < 1e-9, "{}", f[i]);
        assert!(f[cat.index_of("bvp_band_power").unwrap()] > 0.99);
    }

    #[test]
    fn slope_of_ramp() {
        let data = owned(|c, i| if c == Channel::Eda { 0.25 * i as f64 / 64.0 } else { 1.0 });
        let cat = FeatureCatalog::v1();
        let f = extract_features(&window(&data), &cat).unwrap();
        assert!((f[cat.index_of("eda_slope").unwrap()] - 0.25).abs() < 1e-12);
        assert_eq!(f[cat.index_of("temp_slope").unwrap()], 0.0);
    }

    #[test]
    fn rejects_bad_slices() {
        let mut data = owned(noisy);
        data[3][10] = f64::INFINITY;
        assert!(extract_features(&window(&data), &FeatureCatalog::v1()).is_err());
        let short: Vec<Vec<f64>> = (0..6).map(|_| vec![0.0; 10]).collect();
        assert!(extract_features(&window(&short), &FeatureCatalog::v1()).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let data: Vec<Vec<f32>> = owned(noisy).into_iter().map(|s| s.into_iter().map(|v| v as f32).collect()).collect();
        let w = Window { minute_index: 0, slices: [&data[0][..], &data[1], &data[2], &data[3], &data[4], &data[5]] };
        let f = extract_features(&w, &FeatureCatalog::v1()).unwrap();
        assert_eq!(f.len(), N_FEATURES);
    }
}
