use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{Channel, SignalFrame, TARGET_RATE_HZ, WINDOW_SAMPLES};

/// One minute of every channel, in [`Channel::ALL`] order.
#[derive(Clone, Copy, Debug)]
pub struct Window<'a, T> {
    pub minute_index: u32,
    pub slices: [&'a [T]; 6],
}

impl<'a, T> Window<'a, T> {
    pub fn channel(&self, c: Channel) -> &'a [T] {
        self.slices[c as usize]
    }
}

/// Splits a 64 Hz frame into disjoint, chronological one-minute windows.
/// A trailing partial minute is dropped; a frame shorter than one minute
/// yields no windows.
pub fn window_1min<T: Scalar>(frame: &SignalFrame<T>) -> Result<Vec<Window<'_, T>>> {
    for c in Channel::ALL {
        let rate = frame.channel(c).sample_rate_hz;
        if rate != TARGET_RATE_HZ {
            return Err(Error::precondition(format!(
                "channel {c} is at {rate} Hz; windowing requires {TARGET_RATE_HZ} Hz"
            )));
        }
    }
    let shortest = Channel::ALL.iter().map(|&c| frame.channel(c).samples.len()).min().unwrap_or(0);
    let n = shortest / WINDOW_SAMPLES;
    Ok((0..n)
        .map(|w| {
            let range = w * WINDOW_SAMPLES..(w + 1) * WINDOW_SAMPLES;
            let slices = Channel::ALL.map(|c| &frame.channel(c).samples[range.clone()]);
            Window { minute_index: w as u32, slices }
        })
        .collect())
}
