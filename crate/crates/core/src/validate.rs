//! Dataset validation: per-invariant violation counts and ingest-time repairs.

use std::collections::{BTreeMap, HashMap};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::data::{
    is_valid_comfort_level, is_valid_incentive, ComfortReport, Dataset, IncentiveSchedule,
    ParticipantId, Phase, PhaseCalendar, PowerReading, ReadingStore, ScreentimeSession,
    SessionIndex, Site, SiteClock, SocketId,
};
use crate::error::{Error, Result};
use crate::screentime::merge_intervals;

/// Parsed but not yet validated inputs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawDataset {
    pub readings: Vec<PowerReading>,
    pub sessions: Vec<ScreentimeSession>,
    pub incentives: Vec<(NaiveDate, u32)>,
    pub phases: Vec<Phase>,
    pub comfort: Vec<ComfortReport>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: BTreeMap<String, usize>,
    pub warnings: BTreeMap<String, usize>,
}

impl ValidationReport {
    pub fn accepted(&self) -> bool {
        self.total_violations() == 0
    }

    pub fn total_violations(&self) -> usize {
        self.violations.values().sum()
    }

    pub fn violation(&self, key: &str) -> usize {
        self.violations.get(key).copied().unwrap_or(0)
    }

    pub fn warning(&self, key: &str) -> usize {
        self.warnings.get(key).copied().unwrap_or(0)
    }

    fn add(map: &mut BTreeMap<String, usize>, key: &str, n: usize) {
        if n > 0 {
            *map.entry(key.to_owned()).or_default() += n;
        }
    }
}

pub const NEGATIVE_WATTS: &str = "negative watts";
pub const NON_FINITE_WATTS: &str = "non-finite watts";
pub const NON_INCREASING: &str = "non-increasing timestamps in stream";
pub const EMPTY_SESSION: &str = "session end not after start";
pub const OVERLAPPING_SESSIONS: &str = "overlapping sessions merged";
pub const INVALID_INCENTIVE: &str = "invalid incentive amount";
pub const DUPLICATE_INCENTIVE: &str = "duplicate incentive date";
pub const INCENTIVE_OUTSIDE_PHASE: &str = "incentive outside incentive phase";
pub const INVALID_COMFORT: &str = "comfort level outside -3..3";

/// Counts invariant violations across all four inputs. Never fails.
pub fn validate_dataset(raw: &RawDataset) -> ValidationReport {
    let mut report = ValidationReport::default();
    let v = &mut report.violations;

    ValidationReport::add(v, NEGATIVE_WATTS, raw.readings.iter().filter(|r| r.watts < 0.0).count());
    ValidationReport::add(
        v,
        NON_FINITE_WATTS,
        raw.readings.iter().filter(|r| !r.watts.is_finite()).count(),
    );
    let mut last: HashMap<(&ParticipantId, &SocketId), i64> = HashMap::new();
    let mut non_increasing = 0;
    for r in &raw.readings {
        let t = r.timestamp.timestamp();
        if let Some(prev) = last.insert((&r.participant_id, &r.socket_id), t) {
            if t <= prev {
                non_increasing += 1;
            }
        }
    }
    ValidationReport::add(v, NON_INCREASING, non_increasing);

    ValidationReport::add(
        v,
        EMPTY_SESSION,
        raw.sessions
            .iter()
            .filter(|s| s.session_end <= s.session_start)
            .count(),
    );

    ValidationReport::add(
        v,
        INVALID_INCENTIVE,
        raw.incentives
            .iter()
            .filter(|(_, a)| !is_valid_incentive(*a))
            .count(),
    );
    let mut seen = std::collections::BTreeSet::new();
    ValidationReport::add(
        v,
        DUPLICATE_INCENTIVE,
        raw.incentives.iter().filter(|(d, _)| !seen.insert(*d)).count(),
    );
    ValidationReport::add(
        v,
        INCENTIVE_OUTSIDE_PHASE,
        raw.incentives
            .iter()
            .filter(|(d, _)| {
                !raw.phases
                    .iter()
                    .any(|p| p.kind.has_incentive() && p.contains(*d))
            })
            .count(),
    );

    let cal = PhaseCalendar::unchecked(raw.phases.clone());
    for (what, n) in cal.problems() {
        ValidationReport::add(v, what, n);
    }

    ValidationReport::add(
        v,
        INVALID_COMFORT,
        raw.comfort
            .iter()
            .filter(|c| !is_valid_comfort_level(i64::from(c.level)))
            .count(),
    );

    let mut by_participant: BTreeMap<&ParticipantId, Vec<(i64, i64)>> = BTreeMap::new();
    for s in raw.sessions.iter().filter(|s| s.session_end > s.session_start) {
        by_participant
            .entry(&s.participant_id)
            .or_default()
            .push((s.session_start.timestamp(), s.session_end.timestamp()));
    }
    let merged: usize = by_participant
        .into_values()
        .map(|iv| merge_intervals(iv).1)
        .sum();
    ValidationReport::add(&mut report.warnings, OVERLAPPING_SESSIONS, merged);

    report
}

impl Dataset {
    /// Validates `raw` and builds the immutable dataset for `site`.
    ///
    /// Overlapping sessions are merged (a warning, not a violation); any
    /// violation rejects the dataset.
    pub fn from_raw(raw: RawDataset, site: Site, clock: SiteClock) -> Result<(Dataset, ValidationReport)> {
        let report = validate_dataset(&raw);
        if !report.accepted() {
            return Err(Error::Invalid(Box::new(report)));
        }
        let mut incentives = IncentiveSchedule::new();
        for (d, a) in &raw.incentives {
            incentives.insert(*d, *a)?;
        }
        let dataset = Dataset {
            site,
            clock,
            calendar: PhaseCalendar::new(raw.phases)?,
            readings: ReadingStore::from_readings(&raw.readings),
            sessions: SessionIndex::from_sessions(&raw.sessions),
            incentives,
            comfort: raw.comfort,
        };
        Ok((dataset, report))
    }
}
