use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Tukey fence `(q1 - k*iqr, q3 + k*iqr)`; membership is strict on both
/// sides.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IqrFence<T> {
    pub q1: T,
    pub q3: T,
    pub k: T,
    pub lower: T,
    pub upper: T,
}

impl<T: Scalar> IqrFence<T> {
    pub fn iqr(&self) -> T {
        self.q3 - self.q1
    }

    pub fn contains(&self, score: T) -> bool {
        score > self.lower && score < self.upper
    }
}

/// Quantile of sorted data by linear interpolation at position `p * (n - 1)`.
pub fn quantile<T: Scalar>(sorted: &[T], p: f64) -> T {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = T::lit(pos - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn iqr_fence<T: Scalar>(scores: &[T], k: T) -> Result<IqrFence<T>> {
    if scores.len() < 4 {
        return Err(Error::invalid(format!("need at least 4 scores, got {}", scores.len())));
    }
    if !(k >= T::zero()) {
        return Err(Error::invalid(format!("fence scale k must be nonnegative, got {k}")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("non-finite score".into()));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let q1 = quantile(&sorted, 0.25);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    Ok(IqrFence { q1, q3, k, lower: q1 - k * iqr, upper: q3 + k * iqr })
}
