//! Domain types shared by every stage of the pipeline.
//!
//! Instants are stored as UTC; calendar dates (phases, incentives, day
//! boundaries) are interpreted in the site's configured timezone.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, Duration, NaiveDate, TimeZone, Utc, Weekday};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seconds in a nominal day.
pub const DAY_S: i64 = 86_400;
/// Seconds in an hour.
pub const HOUR_S: i64 = 3_600;

macro_rules! string_id {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(
    /// Opaque participant identifier.
    ParticipantId
);
string_id!(
    /// Opaque powerstrip socket identifier.
    SocketId
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Site {
    #[serde(rename = "NASA")]
    Nasa,
    #[serde(rename = "CMU")]
    Cmu,
}

impl Site {
    pub fn as_str(self) -> &'static str {
        match self {
            Site::Nasa => "NASA",
            Site::Cmu => "CMU",
        }
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Site {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nasa" => Ok(Site::Nasa),
            "cmu" => Ok(Site::Cmu),
            other => Err(Error::InvalidArgument(format!("unknown site `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    Baseline,
    Incentive,
    Feedback,
    FeedbackAndIncentive,
}

impl PhaseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PhaseKind::Baseline => "baseline",
            PhaseKind::Incentive => "incentive",
            PhaseKind::Feedback => "feedback",
            PhaseKind::FeedbackAndIncentive => "feedback_and_incentive",
        }
    }

    pub fn has_incentive(self) -> bool {
        matches!(self, PhaseKind::Incentive | PhaseKind::FeedbackAndIncentive)
    }

    pub fn has_feedback(self) -> bool {
        matches!(self, PhaseKind::Feedback | PhaseKind::FeedbackAndIncentive)
    }
}

impl fmt::Display for PhaseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PhaseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .trim()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match norm.as_str() {
            "baseline" => Ok(PhaseKind::Baseline),
            "incentive" | "incentiveonly" => Ok(PhaseKind::Incentive),
            "feedback" | "feedbackonly" | "dashboard" => Ok(PhaseKind::Feedback),
            "feedbackandincentive" | "both" | "incentiveandfeedback" => {
                Ok(PhaseKind::FeedbackAndIncentive)
            }
            _ => Err(Error::InvalidArgument(format!("unknown phase kind `{s}`"))),
        }
    }
}

/// One named phase of an experiment, dates inclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase {
    pub site: Site,
    pub kind: PhaseKind,
    pub label: String,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
}

impl Phase {
    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start_date <= date && date <= self.end_date
    }

    pub fn days(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.start_date
            .iter_days()
            .take_while(move |d| *d <= self.end_date)
    }

    pub fn overlaps(&self, other: &Phase) -> bool {
        self.start_date <= other.end_date && other.start_date <= self.end_date
    }
}

/// The set of phases of one or more experiments.
///
/// Construct through [`PhaseCalendar::new`] to have the invariants enforced;
/// [`PhaseCalendar::unchecked`] keeps raw input for validation reports.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseCalendar {
    phases: Vec<Phase>,
}

impl PhaseCalendar {
    pub fn new(phases: Vec<Phase>) -> Result<Self> {
        let cal = Self::unchecked(phases);
        let problems = cal.problems();
        if let Some((what, _)) = problems.into_iter().find(|(_, n)| *n > 0) {
            return Err(Error::InvalidArgument(format!("phase calendar: {what}")));
        }
        Ok(cal)
    }

    pub fn unchecked(mut phases: Vec<Phase>) -> Self {
        phases.sort_by(|a, b| (a.site, a.start_date).cmp(&(b.site, b.start_date)));
        Self { phases }
    }

    /// Invariant violations as (description, count) pairs.
    pub(crate) fn problems(&self) -> Vec<(&'static str, usize)> {
        let inverted = self
            .phases
            .iter()
            .filter(|p| p.start_date > p.end_date)
            .count();
        let mut overlapping = 0;
        for (i, a) in self.phases.iter().enumerate() {
            for b in &self.phases[i + 1..] {
                if a.site == b.site && a.overlaps(b) {
                    overlapping += 1;
                }
            }
        }
        let mut baseline_count: BTreeMap<Site, usize> = BTreeMap::new();
        for p in &self.phases {
            let n = baseline_count.entry(p.site).or_default();
            if p.kind == PhaseKind::Baseline {
                *n += 1;
            }
        }
        let bad_baseline = baseline_count.values().filter(|n| **n != 1).count();
        vec![
            ("phase start after end", inverted),
            ("overlapping phases", overlapping),
            ("site without exactly one baseline phase", bad_baseline),
        ]
    }

    /// The 2016 experiment calendar (both sites).
    pub fn field_experiment_2016() -> Self {
        let d = |m, day| NaiveDate::from_ymd_opt(2016, m, day).expect("valid date");
        let p = |site, kind, label: &str, s, e| Phase {
            site,
            kind,
            label: label.to_owned(),
            start_date: s,
            end_date: e,
        };
        Self::new(vec![
            p(Site::Nasa, PhaseKind::Baseline, "P1N", d(9, 12), d(10, 17)),
            p(Site::Nasa, PhaseKind::Feedback, "P3N", d(10, 18), d(11, 11)),
            p(Site::Cmu, PhaseKind::Baseline, "P1C", d(9, 12), d(10, 17)),
            p(Site::Cmu, PhaseKind::Incentive, "P2C", d(10, 18), d(10, 30)),
            p(Site::Cmu, PhaseKind::Feedback, "P3C", d(10, 31), d(11, 13)),
            p(
                Site::Cmu,
                PhaseKind::FeedbackAndIncentive,
                "P4C",
                d(11, 14),
                d(11, 25),
            ),
        ])
        .expect("static calendar is valid")
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    pub fn for_site(&self, site: Site) -> impl Iterator<Item = &Phase> {
        self.phases.iter().filter(move |p| p.site == site)
    }

    pub fn baseline(&self, site: Site) -> Option<&Phase> {
        self.for_site(site).find(|p| p.kind == PhaseKind::Baseline)
    }

    pub fn phase_of(&self, site: Site, date: NaiveDate) -> Option<&Phase> {
        self.for_site(site).find(|p| p.contains(date))
    }

    /// Finds a phase at `site` by label (case-insensitive) or by kind name.
    pub fn find(&self, site: Site, key: &str) -> Result<&Phase> {
        if let Some(p) = self
            .for_site(site)
            .find(|p| p.label.eq_ignore_ascii_case(key.trim()))
        {
            return Ok(p);
        }
        let kind: PhaseKind = key
            .parse()
            .map_err(|_| Error::UnknownPhase(key.to_owned()))?;
        self.for_site(site)
            .find(|p| p.kind == kind)
            .ok_or_else(|| Error::UnknownPhase(key.to_owned()))
    }

    pub fn experiment_phases(&self, site: Site) -> impl Iterator<Item = &Phase> {
        self.for_site(site).filter(|p| p.kind != PhaseKind::Baseline)
    }
}

/// One timestamped per-socket wattage sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerReading {
    pub timestamp: DateTime<Utc>,
    pub participant_id: ParticipantId,
    pub socket_id: SocketId,
    pub watts: f64,
}

/// A span of active dashboard use.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreentimeSession {
    pub participant_id: ParticipantId,
    pub session_start: DateTime<Utc>,
    pub session_end: DateTime<Utc>,
}

/// Allowed daily incentive amounts: $5 to $50 in steps of $5.
pub const INCENTIVE_AMOUNTS: [u32; 10] = [5, 10, 15, 20, 25, 30, 35, 40, 45, 50];

pub fn is_valid_incentive(amount: u32) -> bool {
    amount % 5 == 0 && (5..=50).contains(&amount)
}

/// Daily incentive postings keyed by date.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncentiveSchedule {
    entries: BTreeMap<NaiveDate, u32>,
}

impl IncentiveSchedule {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an entry; fails on an invalid amount or a duplicate date.
    pub fn insert(&mut self, date: NaiveDate, amount_usd: u32) -> Result<()> {
        if !is_valid_incentive(amount_usd) {
            return Err(Error::InvalidArgument(format!(
                "incentive amount {amount_usd} not in {{5,10,...,50}}"
            )));
        }
        if self.entries.contains_key(&date) {
            return Err(Error::InvalidArgument(format!(
                "incentive already posted for {date}"
            )));
        }
        self.entries.insert(date, amount_usd);
        Ok(())
    }

    pub fn amount_on(&self, date: NaiveDate) -> Option<u32> {
        self.entries.get(&date).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NaiveDate, u32)> + '_ {
        self.entries.iter().map(|(d, a)| (*d, *a))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Thermal comfort vote on the ASHRAE 7-point scale (−3 cold .. +3 hot).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComfortReport {
    pub participant_id: ParticipantId,
    pub timestamp: DateTime<Utc>,
    pub level: i8,
}

pub fn is_valid_comfort_level(level: i64) -> bool {
    (-3..=3).contains(&level)
}

/// A day/hour address with its second-of-day interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimeIndex {
    pub day: NaiveDate,
    pub weekday: Weekday,
    /// 1..=24
    pub hour: u32,
    pub t0: i64,
    pub tf: i64,
}

impl TimeIndex {
    pub fn hour(day: NaiveDate, hour: u32) -> Self {
        assert!((1..=24).contains(&hour), "hour must be 1..=24");
        let h = i64::from(hour);
        Self {
            day,
            weekday: day.weekday(),
            hour,
            t0: HOUR_S * (h - 1),
            tf: HOUR_S * h,
        }
    }

    pub fn whole_day(day: NaiveDate) -> Self {
        Self {
            day,
            weekday: day.weekday(),
            hour: 0,
            t0: 0,
            tf: DAY_S,
        }
    }
}

/// Converts site-local calendar addresses to absolute UTC seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SiteClock {
    pub tz: Tz,
}

impl Default for SiteClock {
    fn default() -> Self {
        Self {
            tz: chrono_tz::America::Los_Angeles,
        }
    }
}

impl SiteClock {
    pub fn new(tz: Tz) -> Self {
        Self { tz }
    }

    /// Unix seconds of local midnight starting `date`.
    pub fn day_start(&self, date: NaiveDate) -> i64 {
        let midnight = date.and_hms_opt(0, 0, 0).expect("midnight");
        match self.tz.from_local_datetime(&midnight).earliest() {
            Some(t) => t.timestamp(),
            // Midnight skipped by a DST jump: the day starts an hour later.
            None => self
                .tz
                .from_local_datetime(&(midnight + Duration::hours(1)))
                .earliest()
                .map(|t| t.timestamp())
                .unwrap_or_else(|| midnight.and_utc().timestamp()),
        }
    }

    /// Absolute window for `[t0, tf)` seconds into the local day.
    ///
    /// `tf == 86400` is taken as the next local midnight so that whole-day
    /// windows cover 23/25-hour DST days.
    pub fn window(&self, date: NaiveDate, t0: i64, tf: i64) -> (i64, i64) {
        let start = self.day_start(date);
        let next = self.day_start(date.succ_opt().expect("date in range"));
        let b = if tf >= DAY_S { next } else { (start + tf).min(next) };
        ((start + t0).min(b), b)
    }

    pub fn index_window(&self, ix: &TimeIndex) -> (i64, i64) {
        self.window(ix.day, ix.t0, ix.tf)
    }

    pub fn local_date(&self, ts: i64) -> NaiveDate {
        self.tz
            .timestamp_opt(ts, 0)
            .single()
            .expect("unambiguous instant")
            .date_naive()
    }
}

/// A single stored sample of one socket.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    /// Unix seconds.
    pub t: i64,
    pub watts: f64,
}

/// Per-(participant, socket) streams ordered by timestamp.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReadingStore {
    streams: BTreeMap<ParticipantId, BTreeMap<SocketId, Vec<Sample>>>,
}

impl ReadingStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a store, sorting every stream by time. Duplicate instants keep
    /// the first sample seen.
    pub fn from_readings<'a>(readings: impl IntoIterator<Item = &'a PowerReading>) -> Self {
        let mut store = Self::new();
        for r in readings {
            store
                .stream_mut(&r.participant_id, &r.socket_id)
                .push(Sample {
                    t: r.timestamp.timestamp(),
                    watts: r.watts,
                });
        }
        for sockets in store.streams.values_mut() {
            for s in sockets.values_mut() {
                s.sort_by_key(|x| x.t);
                s.dedup_by_key(|x| x.t);
            }
        }
        store
    }

    pub fn stream_mut(&mut self, p: &ParticipantId, s: &SocketId) -> &mut Vec<Sample> {
        self.streams
            .entry(p.clone())
            .or_default()
            .entry(s.clone())
            .or_default()
    }

    /// Appends a sample to the end of a stream; the caller guarantees order.
    pub fn push(&mut self, p: &ParticipantId, s: &SocketId, sample: Sample) {
        self.stream_mut(p, s).push(sample);
    }

    pub fn participants(&self) -> impl Iterator<Item = &ParticipantId> {
        self.streams.keys()
    }

    pub fn contains_participant(&self, p: &ParticipantId) -> bool {
        self.streams.contains_key(p)
    }

    pub fn sockets(&self, p: &ParticipantId) -> Option<&BTreeMap<SocketId, Vec<Sample>>> {
        self.streams.get(p)
    }

    pub fn stream(&self, p: &ParticipantId, s: &SocketId) -> Option<&[Sample]> {
        self.streams.get(p)?.get(s).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.streams
            .values()
            .flat_map(|m| m.values())
            .map(Vec::len)
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flattens back to readings, ordered by participant, socket, then time.
    pub fn to_readings(&self) -> Vec<PowerReading> {
        let mut out = Vec::with_capacity(self.len());
        for (p, sockets) in &self.streams {
            for (s, samples) in sockets {
                for x in samples {
                    out.push(PowerReading {
                        timestamp: Utc.timestamp_opt(x.t, 0).single().expect("valid instant"),
                        participant_id: p.clone(),
                        socket_id: s.clone(),
                        watts: x.watts,
                    });
                }
            }
        }
        out
    }
}

/// Merged, per-participant screentime intervals in unix seconds.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SessionIndex {
    by_participant: BTreeMap<ParticipantId, Vec<(i64, i64)>>,
}

impl SessionIndex {
    pub fn from_sessions<'a>(sessions: impl IntoIterator<Item = &'a ScreentimeSession>) -> Self {
        let mut by_participant: BTreeMap<ParticipantId, Vec<(i64, i64)>> = BTreeMap::new();
        for s in sessions {
            by_participant
                .entry(s.participant_id.clone())
                .or_default()
                .push((s.session_start.timestamp(), s.session_end.timestamp()));
        }
        for v in by_participant.values_mut() {
            *v = crate::screentime::merge_intervals(std::mem::take(v)).0;
        }
        Self { by_participant }
    }

    pub fn intervals(&self, p: &ParticipantId) -> Option<&[(i64, i64)]> {
        self.by_participant.get(p).map(Vec::as_slice)
    }

    pub fn participants(&self) -> impl Iterator<Item = &ParticipantId> {
        self.by_participant.keys()
    }

    pub fn insert_merged(&mut self, p: &ParticipantId, start: i64, end: i64) {
        let v = self.by_participant.entry(p.clone()).or_default();
        v.push((start, end));
        *v = crate::screentime::merge_intervals(std::mem::take(v)).0;
    }

    pub fn to_sessions(&self) -> Vec<ScreentimeSession> {
        let at = |t| Utc.timestamp_opt(t, 0).single().expect("valid instant");
        self.by_participant
            .iter()
            .flat_map(|(p, v)| {
                v.iter().map(move |(a, b)| ScreentimeSession {
                    participant_id: p.clone(),
                    session_start: at(*a),
                    session_end: at(*b),
                })
            })
            .collect()
    }
}

/// A validated, immutable single-site dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub site: Site,
    pub clock: SiteClock,
    pub calendar: PhaseCalendar,
    pub readings: ReadingStore,
    pub sessions: SessionIndex,
    pub incentives: IncentiveSchedule,
    pub comfort: Vec<ComfortReport>,
}

impl Dataset {
    pub fn participants(&self) -> Vec<ParticipantId> {
        self.readings.participants().cloned().collect()
    }

    pub fn phase(&self, key: &str) -> Result<&Phase> {
        self.calendar.find(self.site, key)
    }

    pub fn baseline_phase(&self) -> Result<&Phase> {
        self.calendar
            .baseline(self.site)
            .ok_or_else(|| Error::UnknownPhase("baseline".into()))
    }

    pub fn phase_on(&self, date: NaiveDate) -> Option<&Phase> {
        self.calendar.phase_of(self.site, date)
    }

    /// Incentive in effect on `date`, if the date lies in an incentive-bearing phase.
    pub fn incentive_on(&self, date: NaiveDate) -> Option<u32> {
        let phase = self.phase_on(date)?;
        if !phase.kind.has_incentive() {
            return None;
        }
        self.incentives.amount_on(date)
    }
}
