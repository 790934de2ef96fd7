//! Raw-signal text files, one per participant-day:
//!
//! ```text
//! frame,<participant_id>,<YYYY-MM-DD>
//! channel,<name>,<rate_hz>,<n_samples>
//! <sample>        (n_samples lines)
//! channel,...
//! ```
//!
//! Channel names are `acc_x acc_y acc_z bvp eda temp`; samples are written
//! with nine significant digits.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::NaiveDate;

use super::{Channel, ChannelData, SignalFrame};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::scalar::{format_sig9, Scalar};

pub fn write_frame<T: Scalar>(frame: &SignalFrame<T>, path: &Path) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "frame,{},{}", frame.participant_id, frame.day)?;
        for (c, data) in &frame.channels {
            writeln!(w, "channel,{},{},{}", c.name(), data.sample_rate_hz, data.samples.len())?;
            for v in &data.samples {
                writeln!(w, "{}", format_sig9(*v))?;
            }
        }
        Ok(())
    })
}

pub fn read_frame<T: Scalar>(path: &Path) -> Result<SignalFrame<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let mut next = |expect: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((i, Ok(l))) => Ok((i + 1, l)),
            Some((i, Err(e))) => Err(Error::Malformed { row: i + 1, message: e.to_string() }),
            None => Err(Error::Malformed { row: 0, message: format!("unexpected end of file, expected {expect}") }),
        }
    };
    let bad = |row: usize, message: String| Error::Malformed { row, message };

    let (row, head) = next("frame header")?;
    let parts: Vec<&str> = head.split(',').collect();
    if parts.len() != 3 || parts[0] != "frame" {
        return Err(bad(row, format!("expected frame header, found {head:?}")));
    }
    let participant = parts[1].to_string();
    let day = NaiveDate::parse_from_str(parts[2], "%Y-%m-%d")
        .map_err(|_| bad(row, format!("bad date {:?}", parts[2])))?;

    let mut channels = BTreeMap::new();
    for _ in 0..Channel::ALL.len() {
        let (row, head) = next("channel header")?;
        let parts: Vec<&str> = head.split(',').collect();
        if parts.len() != 4 || parts[0] != "channel" {
            return Err(bad(row, format!("expected channel header, found {head:?}")));
        }
        let channel: Channel = parts[1].parse().map_err(|e: Error| bad(row, e.to_string()))?;
        let rate: f64 = parts[2].parse().map_err(|_| bad(row, format!("bad rate {:?}", parts[2])))?;
        let n: usize = parts[3].parse().map_err(|_| bad(row, format!("bad count {:?}", parts[3])))?;
        let mut samples = Vec::with_capacity(n);
        for _ in 0..n {
            let (row, l) = next("sample")?;
            samples.push(l.trim().parse::<T>().map_err(|_| bad(row, format!("bad sample {l:?}")))?);
        }
        if channels.insert(channel, ChannelData { sample_rate_hz: rate, samples }).is_some() {
            return Err(bad(row, format!("duplicate channel {channel}")));
        }
    }
    SignalFrame::new(participant, day, channels)
}
