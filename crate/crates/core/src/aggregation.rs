//! Time and pool averaging of raw socket readings.
//!
//! Socket streams are treated as step functions: each sample holds its value
//! until the next sample, for at most [`STALENESS_CAP_S`] seconds. The last
//! sample of a stream holds for one nominal period ([`SAMPLE_PERIOD_S`]).
//! This is last-observation-carried-forward resampling evaluated in
//! continuous time, so a 60 s grid and the raw samples give the same means.
//!
//! All means are over sampled time only; gaps are never imputed as zero.

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ParticipantId, Phase, ReadingStore, Sample, DAY_S, HOUR_S};

/// Nominal per-socket sample cadence.
pub const SAMPLE_PERIOD_S: i64 = 60;
/// A sample is never carried forward longer than this.
pub const STALENESS_CAP_S: i64 = 300;
/// Per-socket inactivity threshold.
pub const DEFAULT_ACTIVE_THRESHOLD_W: f64 = 5.0;

/// Time-weighted accumulator for one stream over a window.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Accum {
    /// Integral of watts over covered time (W·s).
    pub energy_ws: f64,
    pub seconds: i64,
    pub samples: usize,
}

impl Accum {
    pub fn mean(&self) -> Option<f64> {
        (self.seconds > 0).then(|| self.energy_ws / self.seconds as f64)
    }
}

/// Accumulates one socket stream over `[a, b)`.
///
/// With `threshold = Some(w)` only samples strictly above `w` contribute.
pub fn accumulate(samples: &[Sample], a: i64, b: i64, threshold: Option<f64>) -> Accum {
    let mut acc = Accum::default();
    if b <= a {
        return acc;
    }
    let first = samples.partition_point(|s| s.t < a - STALENESS_CAP_S);
    for i in first..samples.len() {
        let s = samples[i];
        if s.t >= b {
            break;
        }
        let hold_end = match samples.get(i + 1) {
            Some(next) => next.t.min(s.t + STALENESS_CAP_S),
            None => s.t + SAMPLE_PERIOD_S,
        };
        let covered = hold_end.min(b) - s.t.max(a);
        if covered <= 0 {
            continue;
        }
        if let Some(th) = threshold {
            if s.watts <= th {
                continue;
            }
        }
        acc.energy_ws += s.watts * covered as f64;
        acc.seconds += covered;
        acc.samples += 1;
    }
    acc
}

/// Sum over sockets of each socket's mean, with the total sample count.
fn participant_mean(
    store: &ReadingStore,
    participant: &ParticipantId,
    a: i64,
    b: i64,
    threshold: Option<f64>,
) -> Option<(f64, usize)> {
    let sockets = store.sockets(participant)?;
    let mut total = 0.0;
    let mut n = 0;
    let mut any = false;
    for samples in sockets.values() {
        let acc = accumulate(samples, a, b, threshold);
        if let Some(m) = acc.mean() {
            total += m;
            n += acc.samples;
            any = true;
        }
    }
    any.then_some((total, n))
}

/// Time-weighted mean of the participant's total wattage over `[a, b)` (unix s).
pub fn mean_power_between(store: &ReadingStore, p: &ParticipantId, a: i64, b: i64) -> Option<f64> {
    participant_mean(store, p, a, b, None).map(|x| x.0)
}

/// Per-socket mean over samples above `threshold_w`, summed across sockets.
pub fn active_power_between(
    store: &ReadingStore,
    p: &ParticipantId,
    a: i64,
    b: i64,
    threshold_w: f64,
) -> Option<f64> {
    participant_mean(store, p, a, b, Some(threshold_w)).map(|x| x.0)
}

/// Mean total power of `participant` during `[t0, tf)` of local `day`.
pub fn interval_mean_power(
    ds: &Dataset,
    participant: &ParticipantId,
    day: NaiveDate,
    t0: i64,
    tf: i64,
) -> Option<f64> {
    let (a, b) = ds.clock.window(day, t0, tf);
    mean_power_between(&ds.readings, participant, a, b)
}

/// Active (above-threshold) mean power of `participant` over local `day`.
pub fn active_mean_power(
    ds: &Dataset,
    participant: &ParticipantId,
    day: NaiveDate,
    threshold_w: f64,
) -> Option<f64> {
    let (a, b) = ds.clock.window(day, 0, DAY_S);
    active_power_between(&ds.readings, participant, a, b, threshold_w)
}

/// Daily time-averaged power of one participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantDailyMean {
    pub participant_id: ParticipantId,
    pub phase: String,
    pub day: NaiveDate,
    pub mean_watts: f64,
    pub n_samples: usize,
}

pub fn daily_mean(ds: &Dataset, p: &ParticipantId, day: NaiveDate) -> Option<ParticipantDailyMean> {
    let phase = ds.phase_on(day)?;
    let (a, b) = ds.clock.window(day, 0, DAY_S);
    let (mean_watts, n_samples) = participant_mean(&ds.readings, p, a, b, None)?;
    Some(ParticipantDailyMean {
        participant_id: p.clone(),
        phase: phase.label.clone(),
        day,
        mean_watts,
        n_samples,
    })
}

/// Unweighted mean over participants of their mean power in `[a, b)`.
pub fn pool_mean_between(ds: &Dataset, a: i64, b: i64) -> Option<f64> {
    let means: Vec<f64> = ds
        .readings
        .participants()
        .filter_map(|p| mean_power_between(&ds.readings, p, a, b))
        .collect();
    (!means.is_empty()).then(|| means.iter().sum::<f64>() / means.len() as f64)
}

/// Pool-mean power for `hour` (1..=24) of `day`; absent outside `phase`.
pub fn pool_hourly_mean(ds: &Dataset, phase: &Phase, day: NaiveDate, hour: u32) -> Option<f64> {
    if !phase.contains(day) || !(1..=24).contains(&hour) {
        return None;
    }
    let h = i64::from(hour);
    let (a, b) = ds.clock.window(day, HOUR_S * (h - 1), HOUR_S * h);
    pool_mean_between(ds, a, b)
}

/// Weekday key ordered Monday-first.
pub fn weekday_key(w: Weekday) -> u32 {
    w.num_days_from_monday()
}

/// Mean of the participant's daily means per weekday over `baseline`.
pub fn baseline_weekday_means(ds: &Dataset, baseline: &Phase, p: &ParticipantId) -> BTreeMap<u32, f64> {
    let mut acc: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for day in baseline.days() {
        if let Some(m) = daily_mean(ds, p, day) {
            let e = acc.entry(weekday_key(day.weekday())).or_default();
            e.0 += m.mean_watts;
            e.1 += 1;
        }
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub weekday: Weekday,
    pub expt_day: NaiveDate,
    pub baseline_mean: f64,
    pub expt_mean: f64,
}

/// Pairs each experiment day's mean with the same-weekday baseline mean.
///
/// Days where either side is absent are dropped.
pub fn weekday_matched_pairs(
    ds: &Dataset,
    baseline: &Phase,
    expt: &Phase,
    p: &ParticipantId,
) -> Vec<MatchedPair> {
    let reference = baseline_weekday_means(ds, baseline, p);
    matched_pairs_with(ds, &reference, expt, p)
}

pub(crate) fn matched_pairs_with(
    ds: &Dataset,
    reference: &BTreeMap<u32, f64>,
    expt: &Phase,
    p: &ParticipantId,
) -> Vec<MatchedPair> {
    expt.days()
        .filter_map(|day| {
            let base = *reference.get(&weekday_key(day.weekday()))?;
            let e = daily_mean(ds, p, day)?;
            Some(MatchedPair {
                weekday: day.weekday(),
                expt_day: day,
                baseline_mean: base,
                expt_mean: e.mean_watts,
            })
        })
        .collect()
}

/// One row of `aggregates.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub participant_id: ParticipantId,
    pub phase: String,
    pub day: NaiveDate,
    pub kind: &'static str,
    pub watts: f64,
}

/// Daily and active-daily means for every participant and phase day.
pub fn daily_aggregates(ds: &Dataset, threshold_w: f64) -> Vec<AggregateRow> {
    let mut rows = Vec::new();
    for p in ds.readings.participants() {
        for phase in ds.calendar.for_site(ds.site) {
            for day in phase.days() {
                if let Some(m) = daily_mean(ds, p, day) {
                    rows.push(AggregateRow {
                        participant_id: p.clone(),
                        phase: phase.label.clone(),
                        day,
                        kind: "daily",
                        watts: m.mean_watts,
                    });
                }
                if let Some(w) = active_mean_power(ds, p, day, threshold_w) {
                    rows.push(AggregateRow {
                        participant_id: p.clone(),
                        phase: phase.label.clone(),
                        day,
                        kind: "active_daily",
                        watts: w,
                    });
                }
            }
        }
    }
    rows
}
