//! Seeded synthetic cohort standing in for clinical wear data.
//!
//! A cohort is a plan (episodes, per-minute normal-behaviour regimes and
//! episode intensities for every participant-day) plus a deterministic
//! signal generator. Frames are rendered on demand from per-day random
//! streams, so a large cohort never has to sit in memory and any day can be
//! regenerated independently.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{AnnotationIndex, DayKey, EpisodeAnnotation, LabeledDataset};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::signal::{frame_to_instances, Channel, ChannelData, FeatureCatalog, PipelineConfig, SignalFrame};

/// Native device rates used for rendering.
pub const ACC_RATE_HZ: f64 = 32.0;
pub const BVP_RATE_HZ: f64 = 64.0;
pub const EDA_RATE_HZ: f64 = 4.0;
pub const TEMP_RATE_HZ: f64 = 4.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortConfig {
    pub n_participants: usize,
    pub days_per_participant: usize,
    /// Wear time per participant-day.
    pub minutes_per_day: u32,
    /// Share of participant-days carrying at least one episode.
    pub agitation_day_fraction: f64,
    /// Upper bound on episodes placed on one agitation day.
    pub max_episodes_per_day: u32,
    pub episode_duration_mean: f64,
    /// Gamma shape of the episode duration distribution.
    pub episode_duration_shape: f64,
    pub episode_duration_max: u32,
    /// Minimum normal minutes between two episodes of a day.
    pub min_episode_gap: u32,
    pub target_prevalence: f64,
    pub n_normal_categories: u8,
    /// Mean length of a run of one normal-behaviour regime.
    pub mean_category_run: f64,
    /// Scales how far agitation minutes move away from normal behaviour.
    pub effect_size: f64,
    pub start_date: NaiveDate,
    pub seed: u64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        Self {
            n_participants: 12,
            days_per_participant: 30,
            minutes_per_day: 480,
            agitation_day_fraction: 0.35,
            max_episodes_per_day: 5,
            episode_duration_mean: 8.6,
            episode_duration_shape: 2.5,
            episode_duration_max: 30,
            min_episode_gap: 20,
            target_prevalence: 0.013,
            n_normal_categories: 5,
            mean_category_run: 25.0,
            effect_size: 1.0,
            start_date: NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date"),
            seed: 7,
        }
    }
}

impl CohortConfig {
    pub fn validate(&self) -> Result<()> {
        let frac = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} = {v} is not in [0, 1]")))
            }
        };
        frac("agitation_day_fraction", self.agitation_day_fraction)?;
        frac("target_prevalence", self.target_prevalence)?;
        if self.n_participants == 0 || self.days_per_participant == 0 {
            return Err(Error::invalid("cohort needs at least one participant-day"));
        }
        if self.minutes_per_day < 480 {
            return Err(Error::invalid("each participant-day must cover at least 8 hours (480 minutes)"));
        }
        if !(self.episode_duration_mean > 0.0) || !(self.episode_duration_shape > 0.0) {
            return Err(Error::invalid("episode duration mean and shape must be positive"));
        }
        if (self.episode_duration_max as f64) < self.episode_duration_mean {
            return Err(Error::invalid("episode_duration_max is below the target mean"));
        }
        if self.max_episodes_per_day == 0 {
            return Err(Error::invalid("max_episodes_per_day must be positive"));
        }
        if self.n_normal_categories == 0 {
            return Err(Error::invalid("at least one normal-behaviour category is required"));
        }
        if !(self.mean_category_run >= 1.0) || !(self.effect_size >= 0.0) {
            return Err(Error::invalid("mean_category_run must be >= 1 and effect_size >= 0"));
        }
        Ok(())
    }

    pub fn n_days(&self) -> usize {
        self.n_participants * self.days_per_participant
    }
}

/// Everything needed to render one participant-day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayPlan {
    pub key: DayKey,
    pub participant: usize,
    pub index: usize,
    pub minutes: u32,
    /// Ground-truth episodes, inclusive minute ranges, sorted.
    pub episodes: Vec<(u32, u32)>,
    /// Agitation intensity in (0, 1] per episode.
    pub intensities: Vec<f64>,
    /// Normal-behaviour regime per minute; `None` inside episodes.
    pub categories: Vec<Option<u8>>,
}

#[derive(Clone, Copy, Debug)]
struct ParticipantProfile {
    gravity: [f64; 3],
    acc_gain: f64,
    eda_base: f64,
    hr_base: f64,
    temp_base: f64,
}

#[derive(Clone, Debug)]
pub struct Cohort {
    config: CohortConfig,
    days: Vec<DayPlan>,
    profiles: Vec<ParticipantProfile>,
}

/// Outcome of [`inject_boundary_jitter`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JitteredAnnotations {
    /// Recorded episodes, one per input episode, same order.
    pub annotations: Vec<EpisodeAnnotation>,
    /// Positions of episodes whose shifted bounds crossed and were clamped
    /// to their single midpoint minute.
    pub collapsed: Vec<usize>,
}

fn master_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Plans a cohort. Episode counts and durations are chosen so the realized
/// agitation-minute share equals `round(prevalence * total minutes)` and the
/// realized mean duration is that total over the episode count.
pub fn generate_cohort(config: &CohortConfig) -> Result<Cohort> {
    config.validate()?;
    let mut rng = master_rng(config.seed, 0);
    let n_days = config.n_days();
    let total_minutes = n_days as f64 * config.minutes_per_day as f64;

    let profiles: Vec<ParticipantProfile> = (0..config.n_participants)
        .map(|_| {
            let tilt: f64 = rng.random_range(-0.35..0.35);
            let roll: f64 = rng.random_range(-0.35..0.35);
            ParticipantProfile {
                gravity: [tilt.sin(), roll.sin() * tilt.cos(), roll.cos() * tilt.cos()],
                acc_gain: rng.random_range(0.8..1.25),
                eda_base: rng.random_range(1.0..4.0),
                hr_base: rng.random_range(62.0..80.0),
                temp_base: rng.random_range(32.0..34.0),
            }
        })
        .collect();

    // episode budget
    let agit_days_wanted = (config.agitation_day_fraction * n_days as f64).round() as usize;
    let target_minutes = if agit_days_wanted == 0 {
        0
    } else {
        (config.target_prevalence * total_minutes).round() as u64
    };
    let n_episodes = (target_minutes as f64 / config.episode_duration_mean).round() as usize;
    let n_episodes = if target_minutes > 0 { n_episodes.max(1) } else { 0 };
    let agit_days = agit_days_wanted.min(n_episodes);
    if n_episodes > agit_days * config.max_episodes_per_day as usize {
        return Err(Error::invalid(format!(
            "infeasible cohort: {n_episodes} episodes cannot fit on {agit_days} agitation days with at most {} each",
            config.max_episodes_per_day
        )));
    }
    if target_minutes > n_episodes as u64 * config.episode_duration_max as u64 {
        return Err(Error::invalid("infeasible cohort: prevalence unreachable with episode_duration_max"));
    }

    // which days, and how many episodes each
    let mut day_order: Vec<usize> = (0..n_days).collect();
    day_order.shuffle(&mut rng);
    let chosen = &day_order[..agit_days];
    let mut per_day = vec![0u32; n_days];
    for &d in chosen {
        per_day[d] = 1;
    }
    for _ in agit_days..n_episodes {
        let open: Vec<usize> =
            chosen.iter().copied().filter(|&d| per_day[d] < config.max_episodes_per_day).collect();
        per_day[open[rng.random_range(0..open.len())]] += 1;
    }

    let durations = draw_durations(config, n_episodes, target_minutes, &mut rng)?;

    let mut days = Vec::with_capacity(n_days);
    let mut next_duration = 0usize;
    for index in 0..n_days {
        let participant = index / config.days_per_participant;
        let day = config.start_date + Duration::days((index % config.days_per_participant) as i64);
        let k = per_day[index] as usize;
        let lengths = &durations[next_duration..next_duration + k];
        next_duration += k;
        let episodes = place_episodes(config, lengths, &mut rng)
            .ok_or_else(|| Error::invalid(format!("infeasible cohort: cannot place {k} episodes on day {index}")))?;
        let intensities = episodes.iter().map(|_| rng.random_range(0.5..1.0)).collect();
        let categories = assign_categories(config, &episodes, &mut rng);
        days.push(DayPlan {
            key: DayKey::new(format!("P{:02}", participant + 1), day),
            participant,
            index,
            minutes: config.minutes_per_day,
            episodes,
            intensities,
            categories,
        });
    }
    Ok(Cohort { config: config.clone(), days, profiles })
}

fn draw_durations(config: &CohortConfig, n: usize, total: u64, rng: &mut ChaCha8Rng) -> Result<Vec<u32>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let shape = config.episode_duration_shape;
    let gamma = Gamma::new(shape, (config.episode_duration_mean - 1.0).max(0.1) / shape)
        .map_err(|e| Error::invalid(format!("episode duration distribution: {e}")))?;
    let max = config.episode_duration_max;
    let mut d: Vec<u32> =
        (0..n).map(|_| (1.0 + gamma.sample(rng)).round().clamp(1.0, max as f64) as u32).collect();
    let mut sum: u64 = d.iter().map(|&v| v as u64).sum();
    while sum != total {
        let i = rng.random_range(0..n);
        if sum < total && d[i] < max {
            d[i] += 1;
            sum += 1;
        } else if sum > total && d[i] > 1 {
            d[i] -= 1;
            sum -= 1;
        }
    }
    Ok(d)
}

fn place_episodes(config: &CohortConfig, lengths: &[u32], rng: &mut ChaCha8Rng) -> Option<Vec<(u32, u32)>> {
    if lengths.is_empty() {
        return Some(Vec::new());
    }
    let day = config.minutes_per_day;
    let margin = config.min_episode_gap / 2;
    'attempt: for _ in 0..1000 {
        let mut placed: Vec<(u32, u32)> = Vec::with_capacity(lengths.len());
        for &len in lengths {
            if len + 2 * margin > day {
                return None;
            }
            let start = rng.random_range(margin..=day - margin - len);
            let end = start + len - 1;
            let clash = placed.iter().any(|&(s, e)| {
                start <= e + config.min_episode_gap && s <= end + config.min_episode_gap
            });
            if clash {
                continue 'attempt;
            }
            placed.push((start, end));
        }
        placed.sort_unstable();
        return Some(placed);
    }
    None
}

fn assign_categories(config: &CohortConfig, episodes: &[(u32, u32)], rng: &mut ChaCha8Rng) -> Vec<Option<u8>> {
    let n = config.n_normal_categories;
    let p_switch = 1.0 / config.mean_category_run;
    let mut current = rng.random_range(0..n);
    (0..config.minutes_per_day)
        .map(|m| {
            if rng.random::<f64>() < p_switch {
                current = rng.random_range(0..n);
            }
            if episodes.iter().any(|&(s, e)| s <= m && m <= e) {
                None
            } else {
                Some(current)
            }
        })
        .collect()
}

/// Signal statistics of one normal-behaviour regime.
#[derive(Clone, Copy, Debug)]
struct Regime {
    acc_noise: f64,
    motion_amp: f64,
    motion_hz: f64,
    tilt: f64,
    eda_offset: f64,
    hr_offset: f64,
    temp_offset: f64,
}

/// Behaviour of one minute of category `category`. The activity level and
/// posture wander around the category centre, so categories overlap.
fn regime(category: u8, n: u8, rng: &mut ChaCha8Rng) -> Regime {
    let centre = if n > 1 { category as f64 / (n - 1) as f64 } else { 0.3 };
    let a = (centre + 0.2 * rng.sample::<f64, _>(StandardNormal)).clamp(0.0, 1.2);
    Regime {
        acc_noise: 0.01 + 0.06 * a,
        motion_amp: 0.12 * a,
        motion_hz: 0.8 + 1.2 * a,
        tilt: 0.5 * category as f64 + 0.4 * rng.sample::<f64, _>(StandardNormal),
        eda_offset: 0.3 * a + 0.08 * rng.sample::<f64, _>(StandardNormal),
        hr_offset: 20.0 * a + 5.0 * rng.sample::<f64, _>(StandardNormal),
        temp_offset: -0.25 * a,
    }
}

struct MinuteState {
    acc_noise: f64,
    motion_amp: f64,
    motion_hz: f64,
    tilt: f64,
    eda_target: f64,
    hr: f64,
    temp_target: f64,
    irregular: bool,
}

impl Cohort {
    pub fn config(&self) -> &CohortConfig {
        &self.config
    }

    pub fn days(&self) -> &[DayPlan] {
        &self.days
    }

    /// Ground-truth annotations of the whole cohort.
    pub fn annotations(&self) -> Vec<EpisodeAnnotation> {
        self.days
            .iter()
            .flat_map(|d| {
                d.episodes.iter().map(move |&(s, e)| EpisodeAnnotation {
                    participant_id: d.key.participant_id.clone(),
                    day: d.key.day,
                    start_minute: s,
                    end_minute: e,
                })
            })
            .collect()
    }

    /// Per-minute normal-behaviour regimes, keyed by participant-day.
    pub fn category_map(&self) -> BTreeMap<DayKey, Vec<Option<u8>>> {
        self.days.iter().map(|d| (d.key.clone(), d.categories.clone())).collect()
    }

    pub fn total_minutes(&self) -> u64 {
        self.days.iter().map(|d| d.minutes as u64).sum()
    }

    pub fn agitation_minutes(&self) -> u64 {
        self.days.iter().flat_map(|d| d.episodes.iter()).map(|&(s, e)| (e - s + 1) as u64).sum()
    }

    pub fn realized_prevalence(&self) -> f64 {
        self.agitation_minutes() as f64 / self.total_minutes() as f64
    }

    pub fn mean_episode_duration(&self) -> Option<f64> {
        let n: usize = self.days.iter().map(|d| d.episodes.len()).sum();
        (n > 0).then(|| self.agitation_minutes() as f64 / n as f64)
    }

    fn minute_state(&self, plan: &DayPlan, minute: u32, rng: &mut ChaCha8Rng) -> MinuteState {
        let profile = &self.profiles[plan.participant];
        let jitter = |rng: &mut ChaCha8Rng, s: f64| (s * rng.sample::<f64, _>(StandardNormal)).exp();
        let episode = plan.episodes.iter().position(|&(s, e)| s <= minute && minute <= e);
        match episode {
            Some(k) => {
                let (s, e) = plan.episodes[k];
                // ramps up over the first minutes, eases off over the last
                let edge = ((minute - s).min(e - minute) as f64 + 1.0) / 3.0;
                let level = self.config.effect_size * plan.intensities[k] * edge.min(1.0);
                // a moderately active baseline shifted by the episode level
                let n_cat = self.config.n_normal_categories;
                let r = regime(rng.random_range(0..n_cat.max(1)), n_cat, rng);
                MinuteState {
                    acc_noise: (r.acc_noise + 0.048 * level) * jitter(rng, 0.35),
                    motion_amp: (r.motion_amp + 0.064 * level) * jitter(rng, 0.3),
                    motion_hz: r.motion_hz,
                    tilt: r.tilt,
                    eda_target: profile.eda_base + r.eda_offset + 0.4 * level,
                    hr: profile.hr_base + r.hr_offset + 12.8 * level,
                    temp_target: profile.temp_base + r.temp_offset,
                    irregular: rng.random_bool((0.96 * level).clamp(0.0, 1.0)),
                }
            }
            None => {
                let r = regime(plan.categories[minute as usize].unwrap_or(0), self.config.n_normal_categories, rng);
                MinuteState {
                    acc_noise: r.acc_noise * jitter(rng, 0.35),
                    motion_amp: r.motion_amp * jitter(rng, 0.3),
                    motion_hz: r.motion_hz,
                    tilt: r.tilt,
                    eda_target: profile.eda_base + r.eda_offset,
                    hr: profile.hr_base + r.hr_offset,
                    temp_target: profile.temp_base + r.temp_offset,
                    irregular: false,
                }
            }
        }
    }

    /// Renders the raw signals of day `index` at native device rates.
    pub fn frame<T: Scalar>(&self, index: usize) -> Result<SignalFrame<T>> {
        let plan = self
            .days
            .get(index)
            .ok_or_else(|| Error::invalid(format!("day index {index} out of range")))?;
        let profile = self.profiles[plan.participant];
        let mut rng = master_rng(self.config.seed, index as u64 + 1);
        let minutes = plan.minutes as usize;
        let per_min = |rate: f64| (rate * 60.0) as usize;
        let mut acc: [Vec<T>; 3] = std::array::from_fn(|_| Vec::with_capacity(minutes * per_min(ACC_RATE_HZ)));
        let mut bvp = Vec::with_capacity(minutes * per_min(BVP_RATE_HZ));
        let mut eda = Vec::with_capacity(minutes * per_min(EDA_RATE_HZ));
        let mut temp = Vec::with_capacity(minutes * per_min(TEMP_RATE_HZ));

        let mut eda_level = profile.eda_base;
        let mut temp_level = profile.temp_base;
        let mut phase = 0.0f64;
        let mut beat_phase = 0.0f64;
        let two_pi = std::f64::consts::TAU;
        for minute in 0..plan.minutes {
            let st = self.minute_state(plan, minute, &mut rng);
            let g = profile.gravity;
            let (c, s) = (st.tilt.cos(), st.tilt.sin());
            let grav = [g[0] * c - g[1] * s, g[0] * s + g[1] * c, g[2]];
            let n_acc = per_min(ACC_RATE_HZ);
            let mut hz = st.motion_hz;
            for i in 0..n_acc {
                if st.irregular && i % 64 == 0 {
                    hz = rng.random_range(1.0..3.5);
                }
                phase += two_pi * hz / ACC_RATE_HZ;
                let motion = st.motion_amp * phase.sin();
                for (axis, out) in acc.iter_mut().enumerate() {
                    let noise: f64 = rng.sample(StandardNormal);
                    let v = grav[axis] + motion * [1.0, 0.6, 0.3][axis] + st.acc_noise * noise;
                    out.push(T::lit(profile.acc_gain * v));
                }
            }

            let n_bvp = per_min(BVP_RATE_HZ);
            let amp = 40.0 * (1.0 + 0.1 * rng.sample::<f64, _>(StandardNormal));
            for _ in 0..n_bvp {
                beat_phase += two_pi * (st.hr / 60.0) / BVP_RATE_HZ;
                let noise: f64 = rng.sample(StandardNormal);
                let artifact = 200.0 * st.acc_noise * noise;
                bvp.push(T::lit(amp * beat_phase.sin() + 3.0 * noise + artifact));
            }

            let eda_start = eda_level;
            eda_level += 0.3 * (st.eda_target - eda_level) + 0.03 * rng.sample::<f64, _>(StandardNormal);
            let temp_start = temp_level;
            temp_level += 0.1 * (st.temp_target - temp_level) + 0.005 * rng.sample::<f64, _>(StandardNormal);
            let n_slow = per_min(EDA_RATE_HZ);
            for i in 0..n_slow {
                let f = i as f64 / n_slow as f64;
                let ne: f64 = rng.sample(StandardNormal);
                let nt: f64 = rng.sample(StandardNormal);
                eda.push(T::lit((eda_start + (eda_level - eda_start) * f + 0.01 * ne).max(0.01)));
                temp.push(T::lit(temp_start + (temp_level - temp_start) * f + 0.01 * nt));
            }
        }

        let [acc_x, acc_y, acc_z] = acc;
        let channels = BTreeMap::from([
            (Channel::AccX, ChannelData { sample_rate_hz: ACC_RATE_HZ, samples: acc_x }),
            (Channel::AccY, ChannelData { sample_rate_hz: ACC_RATE_HZ, samples: acc_y }),
            (Channel::AccZ, ChannelData { sample_rate_hz: ACC_RATE_HZ, samples: acc_z }),
            (Channel::Bvp, ChannelData { sample_rate_hz: BVP_RATE_HZ, samples: bvp }),
            (Channel::Eda, ChannelData { sample_rate_hz: EDA_RATE_HZ, samples: eda }),
            (Channel::Temp, ChannelData { sample_rate_hz: TEMP_RATE_HZ, samples: temp }),
        ]);
        SignalFrame::new(plan.key.participant_id.clone(), plan.key.day, channels)
    }

    /// Runs the feature pipeline over every day, labelling windows from
    /// `annotations` (ground truth when `None`). Days are processed in
    /// parallel; the result is in day order regardless of thread count.
    pub fn build_dataset<T: Scalar>(
        &self,
        annotations: Option<&[EpisodeAnnotation]>,
        catalog: &FeatureCatalog,
        pipeline: &PipelineConfig,
    ) -> Result<LabeledDataset<T>> {
        let truth;
        let annotations = match annotations {
            Some(a) => a,
            None => {
                truth = self.annotations();
                &truth
            }
        };
        let index = AnnotationIndex::new(annotations);
        let per_day: Vec<Result<Vec<_>>> = (0..self.days.len())
            .into_par_iter()
            .map(|d| {
                let frame = self.frame::<T>(d)?;
                frame_to_instances(&frame, &index, Some(&self.days[d].categories), catalog, pipeline)
            })
            .collect();
        let mut instances = Vec::with_capacity(self.total_minutes() as usize);
        for day in per_day {
            instances.extend(day?);
        }
        LabeledDataset::new(instances, annotations.to_vec())
    }
}

/// Shrinks every episode inward: the start moves later and the end earlier
/// by independent uniform shifts in `[0, max_shift_minutes]`.
pub fn inject_boundary_jitter(
    annotations: &[EpisodeAnnotation],
    max_shift_minutes: u32,
    seed: u64,
) -> JitteredAnnotations {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut collapsed = Vec::new();
    let recorded = annotations
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let ds = rng.random_range(0..=max_shift_minutes);
            let de = rng.random_range(0..=max_shift_minutes);
            let start = a.start_minute + ds;
            let end = a.end_minute.saturating_sub(de);
            let mut out = a.clone();
            if start <= end {
                out.start_minute = start;
                out.end_minute = end;
            } else {
                let mid = a.start_minute + (a.end_minute - a.start_minute) / 2;
                out.start_minute = mid;
                out.end_minute = mid;
                collapsed.push(i);
            }
            out
        })
        .collect();
    JitteredAnnotations { annotations: recorded, collapsed }
}
