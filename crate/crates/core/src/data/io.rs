//! Delimited-text dataset and annotation files.
//!
//! Dataset rows: `participant_id,date,minute_index,label,category,f1..f67`,
//! dates in ISO-8601, `category` empty when unknown, features with nine
//! significant digits. Annotation rows:
//! `participant_id,date,start_minute,end_minute`. Both files carry a header
//! row; error row numbers count data rows from 1.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;

use super::{EpisodeAnnotation, Label, LabeledDataset, WindowInstance, N_FEATURES};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::scalar::{format_sig9, Scalar};

pub const DATASET_FIXED_COLUMNS: [&str; 5] =
    ["participant_id", "date", "minute_index", "label", "category"];
pub const ANNOTATION_HEADER: [&str; 4] = ["participant_id", "date", "start_minute", "end_minute"];

fn dataset_header() -> Vec<String> {
    DATASET_FIXED_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain((1..=N_FEATURES).map(|i| format!("f{i}")))
        .collect()
}

fn open(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).comment(Some(b'#')).from_reader(file))
}

fn field<'r>(rec: &'r csv::StringRecord, i: usize, row: usize, name: &str) -> Result<&'r str> {
    rec.get(i)
        .ok_or_else(|| Error::Malformed { row, message: format!("missing column {name}") })
}

fn parse<V: std::str::FromStr>(s: &str, row: usize, name: &str) -> Result<V> {
    s.trim()
        .parse()
        .map_err(|_| Error::Malformed { row, message: format!("cannot parse {name} from {s:?}") })
}

fn parse_date(s: &str, row: usize) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .map_err(|_| Error::Malformed { row, message: format!("bad ISO date {s:?}") })
}

fn csv_err(e: csv::Error, row: usize) -> Error {
    Error::Malformed { row, message: e.to_string() }
}

pub fn load_annotations(path: &Path) -> Result<Vec<EpisodeAnnotation>> {
    let mut rdr = open(path)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| csv_err(e, row))?;
        if rec.len() != ANNOTATION_HEADER.len() {
            return Err(Error::Malformed {
                row,
                message: format!("expected {} columns, found {}", ANNOTATION_HEADER.len(), rec.len()),
            });
        }
        out.push(EpisodeAnnotation {
            participant_id: field(&rec, 0, row, "participant_id")?.to_string(),
            day: parse_date(field(&rec, 1, row, "date")?, row)?,
            start_minute: parse(field(&rec, 2, row, "start_minute")?, row, "start_minute")?,
            end_minute: parse(field(&rec, 3, row, "end_minute")?, row, "end_minute")?,
        });
    }
    Ok(out)
}

pub fn save_annotations(annotations: &[EpisodeAnnotation], path: &Path) -> Result<()> {
    save_annotations_with_preamble(annotations, path, "")
}

fn write_preamble(w: &mut impl Write, preamble: &str) -> std::io::Result<()> {
    for line in preamble.lines() {
        writeln!(w, "# {line}")?;
    }
    Ok(())
}

/// Like [`save_annotations`], with `preamble` lines written first as `#`
/// comments, which loaders skip.
pub fn save_annotations_with_preamble(annotations: &[EpisodeAnnotation], path: &Path, preamble: &str) -> Result<()> {
    write_atomic(path, |w| {
        write_preamble(w, preamble)?;
        writeln!(w, "{}", ANNOTATION_HEADER.join(","))?;
        for a in annotations {
            writeln!(w, "{},{},{},{}", a.participant_id, a.day, a.start_minute, a.end_minute)?;
        }
        Ok(())
    })
}

/// Loads a dataset file and its annotation file, validating every dataset
/// invariant. Every data row becomes an instance or the load fails.
pub fn load_dataset<T: Scalar>(
    instances_path: &Path,
    annotations_path: &Path,
) -> Result<LabeledDataset<T>> {
    let annotations = load_annotations(annotations_path)?;
    let mut rdr = open(instances_path)?;
    let expected = DATASET_FIXED_COLUMNS.len() + N_FEATURES;
    let mut instances = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| csv_err(e, row))?;
        if rec.len() != expected {
            return Err(Error::Malformed {
                row,
                message: format!("expected {expected} columns, found {}", rec.len()),
            });
        }
        let label_raw: u8 = parse(field(&rec, 3, row, "label")?, row, "label")?;
        let label = Label::from_u8(label_raw)
            .ok_or_else(|| Error::Malformed { row, message: format!("label {label_raw} not in {{0,1}}") })?;
        let cat = field(&rec, 4, row, "category")?.trim();
        let category = if cat.is_empty() { None } else { Some(parse(cat, row, "category")?) };
        let mut features = Vec::with_capacity(N_FEATURES);
        for k in 0..N_FEATURES {
            let v: T = parse(field(&rec, 5 + k, row, "feature")?, row, "feature")?;
            features.push(v);
        }
        instances.push(WindowInstance {
            participant_id: field(&rec, 0, row, "participant_id")?.to_string(),
            day: parse_date(field(&rec, 1, row, "date")?, row)?,
            minute_index: parse(field(&rec, 2, row, "minute_index")?, row, "minute_index")?,
            features,
            label,
            category,
        });
    }
    LabeledDataset::new(instances, annotations).map_err(|e| match e {
        Error::Malformed { row, message } => Error::Malformed { row: row + 1, message },
        Error::Inconsistent { row, message } => Error::Inconsistent { row: row + 1, message },
        other => other,
    })
}

/// Writes the dataset file and its annotation file. Output bytes depend only
/// on the dataset contents.
pub fn save_dataset<T: Scalar>(
    dataset: &LabeledDataset<T>,
    instances_path: &Path,
    annotations_path: &Path,
) -> Result<()> {
    save_dataset_with_preamble(dataset, instances_path, annotations_path, "")
}

/// Like [`save_dataset`], with `preamble` lines written at the top of both
/// files as `#` comments.
pub fn save_dataset_with_preamble<T: Scalar>(
    dataset: &LabeledDataset<T>,
    instances_path: &Path,
    annotations_path: &Path,
    preamble: &str,
) -> Result<()> {
    write_atomic(instances_path, |w| {
        write_preamble(w, preamble)?;
        writeln!(w, "{}", dataset_header().join(","))?;
        for inst in dataset.instances() {
            write!(
                w,
                "{},{},{},{},",
                inst.participant_id,
                inst.day,
                inst.minute_index,
                inst.label.as_u8()
            )?;
            if let Some(c) = inst.category {
                write!(w, "{c}")?;
            }
            for v in &inst.features {
                write!(w, ",{}", format_sig9(*v))?;
            }
            writeln!(w)?;
        }
        Ok(())
    })?;
    save_annotations_with_preamble(dataset.annotations(), annotations_path, preamble)
}
