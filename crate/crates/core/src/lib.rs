//! Detection of rare agitation episodes in one-minute wearable-sensor
//! windows under extreme class imbalance.
//!
//! The crate covers the full pipeline: signal preprocessing and feature
//! extraction ([`signal`]), a seeded synthetic cohort ([`synth`]),
//! undersampling strategies ([`resample`]), an autoencoder scorer
//! ([`autoenc`]), a cost-weighted random forest ([`model`]), threshold and
//! cumulative re-decision post-processing ([`decide`]) and evaluation with a
//! cross-validation driver ([`eval`]).
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision used by the command-line runner.

pub mod autoenc;
pub mod data;
pub mod decide;
pub mod error;
pub mod eval;
mod fsutil;
pub mod model;
pub mod scalar;
pub mod resample;
pub mod signal;
pub mod synth;

pub use error::{Error, Result};
pub use fsutil::write_atomic;
pub use scalar::Scalar;

pub type Instance = data::WindowInstance<f64>;
pub type Dataset = data::LabeledDataset<f64>;
pub type Frame = signal::SignalFrame<f64>;
pub type DatasetF32 = data::LabeledDataset<f32>;
