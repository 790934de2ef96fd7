//! Raw multichannel wear signals to 67-feature one-minute windows:
//! resampling to 64 Hz, first-order low-pass filtering, non-overlapping
//! windowing and feature extraction.

mod features;
mod filter;
mod io;
mod pipeline;
mod window;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use features::{extract_features, FeatureCatalog, CATALOG_VERSION};
pub use filter::{lowpass_first_order, resample_to_64hz, FirstOrderLowpass};
pub use io::{read_frame, write_frame};
pub use pipeline::{frame_to_instances, preprocess_frame, PipelineConfig};
pub use window::{window_1min, Window};

pub const TARGET_RATE_HZ: f64 = 64.0;
pub const WINDOW_SAMPLES: usize = 3840;

/// Sensor channels of a wrist-worn device.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    AccX,
    AccY,
    AccZ,
    Bvp,
    Eda,
    Temp,
}

impl Channel {
    pub const ALL: [Channel; 6] =
        [Channel::AccX, Channel::AccY, Channel::AccZ, Channel::Bvp, Channel::Eda, Channel::Temp];

    pub fn name(self) -> &'static str {
        match self {
            Channel::AccX => "acc_x",
            Channel::AccY => "acc_y",
            Channel::AccZ => "acc_z",
            Channel::Bvp => "bvp",
            Channel::Eda => "eda",
            Channel::Temp => "temp",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Channel::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown channel {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelData<T> {
    pub sample_rate_hz: f64,
    pub samples: Vec<T>,
}

impl<T> ChannelData<T> {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }
}

/// All channels recorded for one participant-day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalFrame<T> {
    pub participant_id: String,
    pub day: NaiveDate,
    pub channels: BTreeMap<Channel, ChannelData<T>>,
}

impl<T: Scalar> SignalFrame<T> {
    /// Builds a frame, checking the full channel set, positive rates,
    /// nonempty samples and durations agreeing within one second.
    pub fn new(
        participant_id: impl Into<String>,
        day: NaiveDate,
        channels: BTreeMap<Channel, ChannelData<T>>,
    ) -> Result<Self> {
        for c in Channel::ALL {
            let data = channels
                .get(&c)
                .ok_or_else(|| Error::invalid(format!("frame is missing channel {c}")))?;
            if !(data.sample_rate_hz > 0.0 && data.sample_rate_hz.is_finite()) {
                return Err(Error::invalid(format!("channel {c} has rate {}", data.sample_rate_hz)));
            }
            if data.samples.is_empty() {
                return Err(Error::invalid(format!("channel {c} has no samples")));
            }
        }
        let durations: Vec<f64> = channels.values().map(ChannelData::duration_s).collect();
        let lo = durations.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = durations.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo > 1.0 {
            return Err(Error::invalid(format!(
                "channel durations differ by {:.3} s (limit 1 s)",
                hi - lo
            )));
        }
        Ok(Self { participant_id: participant_id.into(), day, channels })
    }

    pub fn channel(&self, c: Channel) -> &ChannelData<T> {
        &self.channels[&c]
    }

    pub fn duration_s(&self) -> f64 {
        self.channels.values().map(ChannelData::duration_s).fold(f64::INFINITY, f64::min)
    }
}
