//! Single-hidden-layer autoencoder used to score how typical a normal
//! window is. Inputs are standardized with statistics of the training
//! normals; the score is the mean absolute reconstruction error in
//! standardized units.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::N_FEATURES;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::scalar::Scalar;

pub const HIDDEN_DIM: usize = 64;
pub const MODEL_FORMAT: &str = "autoencoder/v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Tanh,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AeTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Mini-batch size; a value at least the sample count means full-batch
    /// descent, which makes training independent of input order.
    pub batch_size: usize,
    /// L2 penalty on both weight matrices.
    pub weight_decay: f64,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for AeTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            learning_rate: 0.1,
            batch_size: 64,
            weight_decay: 1e-3,
            activation: Activation::Linear,
            seed: 1,
        }
    }
}

impl AeTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || !(self.learning_rate > 0.0) || self.batch_size == 0 || !(self.weight_decay >= 0.0) {
            return Err(Error::invalid(format!("invalid autoencoder training config {self:?}")));
        }
        Ok(())
    }
}

/// 67 -> 64 -> 67 autoencoder with its input standardization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderModel<T> {
    pub format: String,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub activation: Activation,
    pub feature_mean: Vec<T>,
    pub feature_std: Vec<T>,
    /// Row-major `hidden_dim x input_dim`.
    pub encoder_weights: Vec<T>,
    pub encoder_bias: Vec<T>,
    /// Row-major `input_dim x hidden_dim`.
    pub decoder_weights: Vec<T>,
    pub decoder_bias: Vec<T>,
    /// Mean training loss of each epoch.
    pub loss_history: Vec<T>,
}

struct Workspace<T> {
    z: Vec<T>,
    h: Vec<T>,
    out: Vec<T>,
}

impl<T: Scalar> Workspace<T> {
    fn new() -> Self {
        Self { z: vec![T::zero(); HIDDEN_DIM], h: vec![T::zero(); HIDDEN_DIM], out: vec![T::zero(); N_FEATURES] }
    }
}

impl<T: Scalar> AutoencoderModel<T> {
    fn standardize(&self, x: &[T]) -> Vec<T> {
        x.iter().zip(&self.feature_mean).zip(&self.feature_std).map(|((&v, &m), &s)| (v - m) / s).collect()
    }

    fn forward(&self, x: &[T], ws: &mut Workspace<T>) {
        let d = self.input_dim;
        for j in 0..self.hidden_dim {
            let row = &self.encoder_weights[j * d..(j + 1) * d];
            let z = row.iter().zip(x).fold(self.encoder_bias[j], |acc, (&w, &v)| acc + w * v);
            ws.z[j] = z;
            ws.h[j] = match self.activation {
                Activation::Linear => z,
                Activation::Tanh => z.tanh(),
            };
        }
        let hd = self.hidden_dim;
        for i in 0..d {
            let row = &self.decoder_weights[i * hd..(i + 1) * hd];
            ws.out[i] = row.iter().zip(&ws.h).fold(self.decoder_bias[i], |acc, (&w, &h)| acc + w * h);
        }
    }

    /// Reconstruction of `x` in original (unstandardized) units.
    pub fn reconstruct(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_dim(x)?;
        let mut ws = Workspace::new();
        self.forward(&self.standardize(x), &mut ws);
        Ok(ws.out.iter().zip(&self.feature_mean).zip(&self.feature_std).map(|((&o, &m), &s)| o * s + m).collect())
    }

    fn check_dim(&self, x: &[T]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::invalid(format!("expected {} features, got {}", self.input_dim, x.len())));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))?;
        write_atomic(path, |w| std::io::Write::write_all(w, text.as_bytes()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: Self = serde_json::from_str(&text).map_err(|e| Error::Serialization(e.to_string()))?;
        if model.format != MODEL_FORMAT {
            return Err(Error::Serialization(format!("unsupported model format {:?}", model.format)));
        }
        Ok(model)
    }
}

/// Mean absolute difference between the standardized input and its
/// reconstruction.
pub fn reconstruction_score<T: Scalar>(model: &AutoencoderModel<T>, x: &[T]) -> Result<T> {
    model.check_dim(x)?;
    let s = model.standardize(x);
    let mut ws = Workspace::new();
    model.forward(&s, &mut ws);
    let total = s.iter().zip(&ws.out).map(|(&a, &b)| (a - b).abs()).sum::<T>();
    Ok(total / T::from_usize_lossy(model.input_dim))
}

fn init_uniform<T: Scalar>(rng: &mut ChaCha8Rng, n: usize, fan_in: usize, fan_out: usize) -> Vec<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| T::lit(rng.random_range(-limit..limit))).collect()
}

/// Trains by mini-batch gradient descent on mean squared reconstruction
/// error plus an L2 penalty on the weights.
pub fn train_autoencoder<T: Scalar>(normals: &[&[T]], config: &AeTrainConfig) -> Result<AutoencoderModel<T>> {
    config.validate()?;
    let d = N_FEATURES;
    if normals.len() < HIDDEN_DIM {
        return Err(Error::precondition(format!(
            "autoencoder needs at least {HIDDEN_DIM} training vectors, got {}",
            normals.len()
        )));
    }
    if let Some(v) = normals.iter().find(|v| v.len() != d) {
        return Err(Error::invalid(format!("expected {d} features, got {}", v.len())));
    }
    let full_batch = config.batch_size >= normals.len();
    let mut normals: Vec<&[T]> = normals.to_vec();
    if full_batch {
        // canonical order: statistics and the summed gradient then do not depend on input order
        normals.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    }
    let n = T::from_usize_lossy(normals.len());
    let mut mean = vec![T::zero(); d];
    for v in &normals {
        for (m, &x) in mean.iter_mut().zip(v.iter()) {
            *m = *m + x;
        }
    }
    mean.iter_mut().for_each(|m| *m = *m / n);
    let mut std = vec![T::zero(); d];
    for v in &normals {
        for ((s, &x), &m) in std.iter_mut().zip(v.iter()).zip(&mean) {
            *s = *s + (x - m) * (x - m);
        }
    }
    let tiny = T::lit(1e-12);
    std.iter_mut().for_each(|s| {
        let sd = (*s / n).sqrt();
        *s = if sd > tiny { sd } else { T::one() };
    });

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let hd = HIDDEN_DIM;
    let mut model = AutoencoderModel {
        format: MODEL_FORMAT.to_string(),
        input_dim: d,
        hidden_dim: hd,
        activation: config.activation,
        encoder_weights: init_uniform(&mut rng, hd * d, d, hd),
        encoder_bias: vec![T::zero(); hd],
        decoder_weights: init_uniform(&mut rng, d * hd, hd, d),
        decoder_bias: vec![T::zero(); d],
        feature_mean: mean,
        feature_std: std,
        loss_history: Vec::with_capacity(config.epochs),
    };

    let data: Vec<Vec<T>> = normals.iter().map(|v| model.standardize(v)).collect();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let lr = T::lit(config.learning_rate);
    let wd = T::lit(config.weight_decay);
    let two = T::lit(2.0);
    let scale_dim = T::from_usize_lossy(d);
    let mut ws = Workspace::new();
    let mut g_enc = vec![T::zero(); hd * d];
    let mut g_enc_b = vec![T::zero(); hd];
    let mut g_dec = vec![T::zero(); d * hd];
    let mut g_dec_b = vec![T::zero(); d];
    let mut g_out = vec![T::zero(); d];
    let mut g_z = vec![T::zero(); hd];

    for epoch in 0..config.epochs {
        if !full_batch {
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = T::zero();
        for batch in order.chunks(config.batch_size) {
            g_enc.iter_mut().for_each(|g| *g = T::zero());
            g_enc_b.iter_mut().for_each(|g| *g = T::zero());
            g_dec.iter_mut().for_each(|g| *g = T::zero());
            g_dec_b.iter_mut().for_each(|g| *g = T::zero());
            let norm = T::one() / (T::from_usize_lossy(batch.len()) * scale_dim);
            for &idx in batch {
                let x = &data[idx];
                model.forward(x, &mut ws);
                for i in 0..d {
                    let err = ws.out[i] - x[i];
                    epoch_loss = epoch_loss + err * err;
                    g_out[i] = two * err * norm;
                }
                for i in 0..d {
                    let go = g_out[i];
                    g_dec_b[i] = g_dec_b[i] + go;
                    let row = &mut g_dec[i * hd..(i + 1) * hd];
                    for (g, &h) in row.iter_mut().zip(&ws.h) {
                        *g = *g + go * h;
                    }
                }
                for j in 0..hd {
                    let mut gh = T::zero();
                    for i in 0..d {
                        gh = gh + model.decoder_weights[i * hd + j] * g_out[i];
                    }
                    g_z[j] = match model.activation {
                        Activation::Linear => gh,
                        Activation::Tanh => gh * (T::one() - ws.h[j] * ws.h[j]),
                    };
                }
                for j in 0..hd {
                    let gz = g_z[j];
                    g_enc_b[j] = g_enc_b[j] + gz;
                    let row = &mut g_enc[j * d..(j + 1) * d];
                    for (g, &v) in row.iter_mut().zip(x) {
                        *g = *g + gz * v;
                    }
                }
            }
            for (w, &g) in model.encoder_weights.iter_mut().zip(&g_enc) {
                *w = *w - lr * (g + wd * *w);
            }
            for (b, &g) in model.encoder_bias.iter_mut().zip(&g_enc_b) {
                *b = *b - lr * g;
            }
            for (w, &g) in model.decoder_weights.iter_mut().zip(&g_dec) {
                *w = *w - lr * (g + wd * *w);
            }
            for (b, &g) in model.decoder_bias.iter_mut().zip(&g_dec_b) {
                *b = *b - lr * g;
            }
        }
        let loss = epoch_loss / (T::from_usize_lossy(data.len()) * scale_dim);
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "autoencoder loss diverged at epoch {epoch} (learning rate {})",
                config.learning_rate
            )));
        }
        model.loss_history.push(loss);
    }
    Ok(model)
}

/// Mean squared reconstruction error over `data`, standardized units.
pub fn training_mse<T: Scalar>(model: &AutoencoderModel<T>, data: &[&[T]]) -> Result<T> {
    let mut ws = Workspace::new();
    let mut total = T::zero();
    for x in data {
        model.check_dim(x)?;
        let s = model.standardize(x);
        model.forward(&s, &mut ws);
        total = total + s.iter().zip(&ws.out).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>();
    }
    Ok(total / T::from_usize_lossy(data.len() * model.input_dim))
}
