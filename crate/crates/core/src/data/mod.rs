//! Domain types shared by every stage: labelled one-minute windows, episode
//! annotations, fold plans and the time-gap measure used by weighted
//! undersampling.

mod folds;
mod io;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use folds::{make_folds, make_folds_for, SplitPlan};
pub use io::{
    load_annotations, load_dataset, save_annotations, save_annotations_with_preamble, save_dataset,
    save_dataset_with_preamble, ANNOTATION_HEADER, DATASET_FIXED_COLUMNS,
};

/// Length of every feature vector.
pub const N_FEATURES: usize = 67;

/// One participant's wear period on one calendar day.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DayKey {
    pub participant_id: String,
    pub day: NaiveDate,
}

impl DayKey {
    pub fn new(participant_id: impl Into<String>, day: NaiveDate) -> Self {
        Self { participant_id: participant_id.into(), day }
    }
}

impl fmt::Display for DayKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.participant_id, self.day)
    }
}

/// Binary class of a window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Normal,
    Agitation,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Normal => 0,
            Label::Agitation => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::Normal),
            1 => Some(Label::Agitation),
            _ => None,
        }
    }

    pub fn from_bool(agitated: bool) -> Self {
        if agitated {
            Label::Agitation
        } else {
            Label::Normal
        }
    }

    pub fn is_agitation(self) -> bool {
        self == Label::Agitation
    }
}

/// An annotated agitation episode; both ends inclusive, in minutes from day start.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EpisodeAnnotation {
    pub participant_id: String,
    pub day: NaiveDate,
    pub start_minute: u32,
    pub end_minute: u32,
}

impl EpisodeAnnotation {
    pub fn new(participant_id: impl Into<String>, day: NaiveDate, start: u32, end: u32) -> Self {
        Self { participant_id: participant_id.into(), day, start_minute: start, end_minute: end }
    }

    pub fn key(&self) -> DayKey {
        DayKey::new(self.participant_id.clone(), self.day)
    }

    pub fn contains(&self, minute: u32) -> bool {
        self.start_minute <= minute && minute <= self.end_minute
    }

    pub fn duration_minutes(&self) -> u32 {
        self.end_minute - self.start_minute + 1
    }
}

/// One non-overlapping one-minute window with its feature vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowInstance<T> {
    pub participant_id: String,
    pub day: NaiveDate,
    /// Window start, minutes from day start.
    pub minute_index: u32,
    pub features: Vec<T>,
    pub label: Label,
    /// Latent normal-behaviour regime, when known (synthetic data only).
    pub category: Option<u8>,
}

impl<T: Scalar> WindowInstance<T> {
    pub fn key(&self) -> DayKey {
        DayKey::new(self.participant_id.clone(), self.day)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.len() != N_FEATURES {
            return Err(Error::invalid(format!(
                "expected {N_FEATURES} features, found {}",
                self.features.len()
            )));
        }
        if let Some(i) = self.features.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("feature f{} is not finite", i + 1)));
        }
        Ok(())
    }
}

/// Annotations indexed by participant-day, each list sorted by start minute.
#[derive(Clone, Debug, Default)]
pub struct AnnotationIndex {
    by_day: HashMap<DayKey, Vec<(u32, u32)>>,
}

impl AnnotationIndex {
    pub fn new(annotations: &[EpisodeAnnotation]) -> Self {
        let mut by_day: HashMap<DayKey, Vec<(u32, u32)>> = HashMap::new();
        for a in annotations {
            by_day.entry(a.key()).or_default().push((a.start_minute, a.end_minute));
        }
        for eps in by_day.values_mut() {
            eps.sort_unstable();
        }
        Self { by_day }
    }

    pub fn episodes(&self, participant_id: &str, day: NaiveDate) -> &[(u32, u32)] {
        // HashMap lookups need an owned key; the allocation is cheap next to
        // any per-instance work done by callers.
        self.by_day
            .get(&DayKey::new(participant_id, day))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn is_annotated(&self, participant_id: &str, day: NaiveDate, minute: u32) -> bool {
        self.episodes(participant_id, day).iter().any(|&(s, e)| s <= minute && minute <= e)
    }

    /// Minimum distance in minutes from `minute` to any annotated minute of
    /// the day; `None` when the day carries no annotation.
    pub fn gap(&self, participant_id: &str, day: NaiveDate, minute: u32) -> Option<u32> {
        gap_to_episodes(self.episodes(participant_id, day), minute)
    }
}

fn gap_to_episodes(episodes: &[(u32, u32)], minute: u32) -> Option<u32> {
    episodes
        .iter()
        .map(|&(s, e)| {
            if minute < s {
                s - minute
            } else if minute > e {
                minute - e
            } else {
                0
            }
        })
        .min()
}

/// Distance in whole minutes from a normal window to the nearest annotated
/// minute of the same participant-day. `None` stands for an unbounded gap
/// (no episode that day).
pub fn min_time_gap<T: Scalar>(
    instance: &WindowInstance<T>,
    annotations: &[EpisodeAnnotation],
) -> Result<Option<u32>> {
    if instance.label.is_agitation() {
        return Err(Error::precondition("min_time_gap is defined for normal instances only"));
    }
    let episodes: Vec<(u32, u32)> = annotations
        .iter()
        .filter(|a| a.participant_id == instance.participant_id && a.day == instance.day)
        .map(|a| (a.start_minute, a.end_minute))
        .collect();
    Ok(gap_to_episodes(&episodes, instance.minute_index))
}

/// Chronologically ordered windows plus the episode annotations they were
/// labelled from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset<T> {
    instances: Vec<WindowInstance<T>>,
    annotations: Vec<EpisodeAnnotation>,
}

impl<T: Scalar> LabeledDataset<T> {
    /// Validates every dataset invariant; the first violation is reported
    /// with its zero-based instance position.
    pub fn new(
        instances: Vec<WindowInstance<T>>,
        annotations: Vec<EpisodeAnnotation>,
    ) -> Result<Self> {
        validate_annotations(&annotations)?;
        let index = AnnotationIndex::new(&annotations);
        let mut last_minute: HashMap<DayKey, u32> = HashMap::new();
        for (row, inst) in instances.iter().enumerate() {
            inst.validate().map_err(|e| Error::Malformed { row, message: e.to_string() })?;
            let key = inst.key();
            if let Some(&prev) = last_minute.get(&key) {
                if inst.minute_index <= prev {
                    return Err(Error::Malformed {
                        row,
                        message: format!(
                            "minute {} of {key} does not follow minute {prev}",
                            inst.minute_index
                        ),
                    });
                }
            }
            last_minute.insert(key, inst.minute_index);
            let inside = index.is_annotated(&inst.participant_id, inst.day, inst.minute_index);
            if inside != inst.label.is_agitation() {
                let message = if inside {
                    format!("minute {} lies inside an episode but is labelled normal", inst.minute_index)
                } else {
                    format!("minute {} is labelled agitation outside every episode", inst.minute_index)
                };
                return Err(Error::Inconsistent { row, message });
            }
        }
        Ok(Self { instances, annotations })
    }

    pub fn empty() -> Self {
        Self { instances: Vec::new(), annotations: Vec::new() }
    }

    /// The same windows labelled from other annotations.
    pub fn relabel(&self, annotations: Vec<EpisodeAnnotation>) -> Result<Self> {
        let index = AnnotationIndex::new(&annotations);
        let instances = self
            .instances
            .iter()
            .map(|i| WindowInstance {
                label: Label::from_bool(index.is_annotated(&i.participant_id, i.day, i.minute_index)),
                ..i.clone()
            })
            .collect();
        Self::new(instances, annotations)
    }

    pub fn instances(&self) -> &[WindowInstance<T>] {
        &self.instances
    }

    pub fn annotations(&self) -> &[EpisodeAnnotation] {
        &self.annotations
    }

    pub fn into_parts(self) -> (Vec<WindowInstance<T>>, Vec<EpisodeAnnotation>) {
        (self.instances, self.annotations)
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.instances.iter().filter(|i| i.label == label).count()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.instances.iter().map(|i| i.label).collect()
    }

    /// Participant-days in first-appearance order.
    pub fn day_keys(&self) -> Vec<DayKey> {
        let mut seen = BTreeMap::new();
        let mut order = Vec::new();
        for inst in &self.instances {
            let key = inst.key();
            if seen.insert(key.clone(), ()).is_none() {
                order.push(key);
            }
        }
        order
    }

    /// Positions of the instances belonging to each participant-day,
    /// chronological within the day, keyed in first-appearance order.
    pub fn day_groups(&self) -> Vec<(DayKey, Vec<usize>)> {
        group_by_day(&self.instances)
    }

    /// Sub-dataset of the given positions, keeping every annotation.
    pub fn subset(&self, positions: &[usize]) -> Self {
        Self {
            instances: positions.iter().map(|&i| self.instances[i].clone()).collect(),
            annotations: self.annotations.clone(),
        }
    }

    /// Applies `f` to every feature value, e.g. for precision conversion.
    pub fn map_features<U: Scalar>(&self, f: impl Fn(T) -> U) -> LabeledDataset<U> {
        LabeledDataset {
            instances: self
                .instances
                .iter()
                .map(|i| WindowInstance {
                    participant_id: i.participant_id.clone(),
                    day: i.day,
                    minute_index: i.minute_index,
                    features: i.features.iter().map(|&v| f(v)).collect(),
                    label: i.label,
                    category: i.category,
                })
                .collect(),
            annotations: self.annotations.clone(),
        }
    }
}

fn validate_annotations(annotations: &[EpisodeAnnotation]) -> Result<()> {
    let mut by_day: BTreeMap<DayKey, Vec<(u32, u32, usize)>> = BTreeMap::new();
    for (row, a) in annotations.iter().enumerate() {
        if a.start_minute > a.end_minute {
            return Err(Error::Malformed {
                row,
                message: format!("episode start {} after end {}", a.start_minute, a.end_minute),
            });
        }
        by_day.entry(a.key()).or_default().push((a.start_minute, a.end_minute, row));
    }
    for (key, mut eps) in by_day {
        eps.sort_unstable();
        for w in eps.windows(2) {
            if w[1].0 <= w[0].1 {
                return Err(Error::Malformed {
                    row: w[1].2,
                    message: format!("episodes of {key} overlap"),
                });
            }
        }
    }
    Ok(())
}

/// Positions of the instances of each participant-day, keyed in
/// first-appearance order.
pub fn group_by_day<T>(instances: &[WindowInstance<T>]) -> Vec<(DayKey, Vec<usize>)> {
    let mut pos: HashMap<DayKey, usize> = HashMap::new();
    let mut groups: Vec<(DayKey, Vec<usize>)> = Vec::new();
    for (i, inst) in instances.iter().enumerate() {
        let key = DayKey::new(inst.participant_id.clone(), inst.day);
        let slot = *pos.entry(key.clone()).or_insert_with(|| {
            groups.push((key, Vec::new()));
            groups.len() - 1
        });
        groups[slot].1.push(i);
    }
    groups
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;

    #[test]
    fn relabel_follows_new_annotations() {
        let rows: Vec<_> = (0..10).map(|m| inst("p", 1, m, Label::from_bool((3..=5).contains(&m)))).collect();
        let ds = LabeledDataset::new(rows, vec![EpisodeAnnotation::new("p", date(1), 3, 5)]).unwrap();
        let moved = ds.relabel(vec![EpisodeAnnotation::new("p", date(1), 4, 4)]).unwrap();
        let agit: Vec<u32> = moved.instances().iter().filter(|i| i.label.is_agitation()).map(|i| i.minute_index).collect();
        assert_eq!(agit, vec![4]);
        assert_eq!(moved.instances()[2].features, ds.instances()[2].features);
    }

    #[test]
    fn gap_examples() {
        let ann = vec![EpisodeAnnotation::new("p", date(1), 40, 50)];
        let at = |m| min_time_gap(&inst("p", 1, m, Label::Normal), &ann).unwrap();
        assert_eq!(at(30), Some(10));
        assert_eq!(at(51), Some(1));
        assert_eq!(min_time_gap(&inst("p", 2, 30, Label::Normal), &ann).unwrap(), None);
        assert!(min_time_gap(&inst("p", 1, 45, Label::Agitation), &ann).is_err());
    }

    #[test]
    fn gap_is_direction_symmetric() {
        for d in 1..20u32 {
            let before = vec![EpisodeAnnotation::new("p", date(1), 100, 120)];
            let after = vec![EpisodeAnnotation::new("p", date(1), 60, 80)];
            let g1 = min_time_gap(&inst("p", 1, 100 - d, Label::Normal), &before).unwrap();
            let g2 = min_time_gap(&inst("p", 1, 80 + d, Label::Normal), &after).unwrap();
            assert_eq!(g1, g2);
        }
    }

    #[test]
    fn dataset_rejects_label_outside_annotations() {
        let ann = vec![EpisodeAnnotation::new("p", date(1), 2, 2)];
        let rows = vec![inst("p", 1, 1, Label::Normal), inst("p", 1, 3, Label::Agitation)];
        assert!(matches!(LabeledDataset::new(rows, ann), Err(Error::Inconsistent { row: 1, .. })));
    }

    #[test]
    fn dataset_rejects_unlabelled_annotated_minute() {
        let ann = vec![EpisodeAnnotation::new("p", date(1), 1, 2)];
        let rows = vec![inst("p", 1, 1, Label::Agitation), inst("p", 1, 2, Label::Normal)];
        assert!(matches!(LabeledDataset::new(rows, ann), Err(Error::Inconsistent { row: 1, .. })));
    }

    #[test]
    fn dataset_rejects_non_increasing_minutes() {
        let rows = vec![inst("p", 1, 5, Label::Normal), inst("p", 1, 5, Label::Normal)];
        assert!(matches!(LabeledDataset::new(rows, vec![]), Err(Error::Malformed { row: 1, .. })));
    }

    #[test]
    fn dataset_rejects_overlapping_episodes() {
        let ann = vec![
            EpisodeAnnotation::new("p", date(1), 1, 5),
            EpisodeAnnotation::new("p", date(1), 5, 9),
        ];
        assert!(LabeledDataset::<f64>::new(vec![], ann).is_err());
    }

    #[test]
    fn dataset_rejects_wrong_dimension() {
        let mut bad = inst("p", 1, 1, Label::Normal);
        bad.features.pop();
        assert!(LabeledDataset::new(vec![bad], vec![]).is_err());
        let mut nan = inst("p", 1, 1, Label::Normal);
        nan.features[3] = f64::NAN;
        assert!(LabeledDataset::new(vec![nan], vec![]).is_err());
    }

    #[test]
    fn day_groups_follow_first_appearance() {
        let rows = vec![
            inst("b", 1, 0, Label::Normal),
            inst("a", 1, 0, Label::Normal),
            inst("b", 1, 1, Label::Normal),
        ];
        let ds = LabeledDataset::new(rows, vec![]).unwrap();
        let groups = ds.day_groups();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].0.participant_id, "b");
        assert_eq!(groups[0].1, vec![0, 2]);
    }
}
