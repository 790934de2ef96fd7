use std::collections::BTreeMap;

use crate::data::{AnnotationIndex, Label, WindowInstance};
use crate::error::Result;
use crate::scalar::Scalar;

use super::{
    extract_features, lowpass_first_order, resample_to_64hz, window_1min, ChannelData, FeatureCatalog,
    SignalFrame, TARGET_RATE_HZ,
};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Low-pass cutoff applied to every channel.
    pub cutoff_hz: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { cutoff_hz: 10.0 }
    }
}

/// Brings every channel to 64 Hz and low-pass filters it. Channels faster
/// than 64 Hz are filtered before decimation, slower ones after
/// interpolation.
pub fn preprocess_frame<T: Scalar>(frame: &SignalFrame<T>, config: &PipelineConfig) -> Result<SignalFrame<T>> {
    let mut channels = BTreeMap::new();
    for (&c, data) in &frame.channels {
        let rate = data.sample_rate_hz;
        let samples = if rate > TARGET_RATE_HZ {
            let filtered = lowpass_first_order(&data.samples, config.cutoff_hz, rate)?;
            resample_to_64hz(&filtered, rate)?
        } else {
            let at_target = resample_to_64hz(&data.samples, rate)?;
            lowpass_first_order(&at_target, config.cutoff_hz, TARGET_RATE_HZ)?
        };
        channels.insert(c, ChannelData { sample_rate_hz: TARGET_RATE_HZ, samples });
    }
    SignalFrame::new(frame.participant_id.clone(), frame.day, channels)
}

/// Full per-day pipeline: preprocessing, windowing and feature extraction,
/// labelling each window from the day's annotations. `categories`, when
/// given, is indexed by minute and attached to normal windows only.
pub fn frame_to_instances<T: Scalar>(
    frame: &SignalFrame<T>,
    annotations: &AnnotationIndex,
    categories: Option<&[Option<u8>]>,
    catalog: &FeatureCatalog,
    config: &PipelineConfig,
) -> Result<Vec<WindowInstance<T>>> {
    let ready = preprocess_frame(frame, config)?;
    window_1min(&ready)?
        .iter()
        .map(|w| {
            let minute = w.minute_index;
            let label = Label::from_bool(annotations.is_annotated(&frame.participant_id, frame.day, minute));
            let category = match (label, categories) {
                (Label::Normal, Some(cats)) => cats.get(minute as usize).copied().flatten(),
                _ => None,
            };
            Ok(WindowInstance {
                participant_id: frame.participant_id.clone(),
                day: frame.day,
                minute_index: minute,
                features: extract_features(w, catalog)?,
                label,
                category,
            })
        })
        .collect()
}
