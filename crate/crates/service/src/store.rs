//! Mutable service state over a core dataset, with append-only persistence.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use plugwatt_core::aggregation::{mean_power_between, pool_mean_between};
use plugwatt_core::data::{is_valid_comfort_level, is_valid_incentive};
use plugwatt_core::io::{format_utc, COMFORT_CSV, INCENTIVES_CSV, READINGS_CSV, SCREENTIME_CSV};
use plugwatt_core::scoring::{compute_baselines, declare_winner, leaderboard, BaselineRecord, ScoreEntry, ScoringConfig, Winner};
use plugwatt_core::screentime::screentime_between;
use plugwatt_core::{ComfortReport, Dataset, ParticipantId, Phase, Sample, SocketId};
use serde::{Deserialize, Serialize};

/// Heartbeats at most this far apart belong to one session; a session ends
/// this long after its last heartbeat.
pub const HEARTBEAT_GAP_S: i64 = 30;

pub const WINNERS_CSV: &str = "winners.csv";

#[derive(Debug)]
pub enum StoreError {
    NotFound(String),
    Conflict(String),
    Unprocessable(String),
    NoBaselines,
    Io(String),
}

pub type StoreResult<T> = Result<T, StoreError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadingIn {
    pub timestamp: DateTime<Utc>,
    pub participant_id: ParticipantId,
    pub socket_id: SocketId,
    pub watts: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestOutcome {
    pub accepted: usize,
    pub rejected: usize,
    /// Items already stored with the same stream and timestamp (dropped).
    pub duplicates: usize,
    pub rejections: Vec<Rejection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardBody {
    pub date: NaiveDate,
    pub as_of: DateTime<Utc>,
    pub incentive_usd: Option<u32>,
    pub entries: Vec<ScoreEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub start: DateTime<Utc>,
    pub individual_watts: Option<f64>,
    pub pool_watts: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocketReading {
    pub socket_id: SocketId,
    pub watts: f64,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Status {
    pub site: plugwatt_core::Site,
    pub date: NaiveDate,
    pub phase: Option<Phase>,
    pub incentive_usd: Option<u32>,
    pub participants: usize,
}

fn at(t: i64) -> DateTime<Utc> {
    DateTime::from_timestamp(t, 0).expect("valid instant")
}

/// Appends CSV rows, writing the header when the file is new or empty.
fn append(dir: &Path, file: &str, header: &[&str], rows: &[Vec<String>]) -> StoreResult<()> {
    let path = dir.join(file);
    let io = |e: std::io::Error| StoreError::Io(format!("{}: {e}", path.display()));
    let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
    let empty = f.metadata().map_err(io)?.len() == 0;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let csv_err = |e: csv::Error| StoreError::Io(e.to_string());
    if empty {
        w.write_record(header).map_err(csv_err)?;
    }
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| StoreError::Io(e.to_string()))?;
    f.write_all(&bytes).map_err(io)
}

pub fn read_winners(dir: &Path) -> StoreResult<BTreeMap<NaiveDate, Winner>> {
    let path = dir.join(WINNERS_CSV);
    if !path.exists() {
        return Ok(BTreeMap::new());
    }
    let mut rdr = csv::Reader::from_path(&path).map_err(|e| StoreError::Io(e.to_string()))?;
    rdr.deserialize::<Winner>()
        .map(|r| r.map(|w| (w.date, w)).map_err(|e| StoreError::Io(format!("{}: {e}", path.display()))))
        .collect()
}

#[derive(Debug)]
pub struct Store {
    ds: Dataset,
    scoring: ScoringConfig,
    version: u64,
    baselines: Option<Vec<BaselineRecord>>,
    winners: BTreeMap<NaiveDate, Winner>,
    acknowledged: BTreeSet<(ParticipantId, NaiveDate)>,
    dir: Option<PathBuf>,
}

impl Store {
    pub fn new(ds: Dataset, scoring: ScoringConfig) -> Self {
        let mut s = Self {
            ds,
            scoring,
            version: 0,
            baselines: None,
            winners: BTreeMap::new(),
            acknowledged: BTreeSet::new(),
            dir: None,
        };
        s.refresh_baselines();
        s
    }

    /// Persists subsequent writes by appending to the dataset files in `dir`.
    pub fn with_persistence(mut self, dir: impl Into<PathBuf>) -> StoreResult<Self> {
        let dir = dir.into();
        self.winners = read_winners(&dir)?;
        self.dir = Some(dir);
        Ok(self)
    }

    pub fn dataset(&self) -> &Dataset {
        &self.ds
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn scoring(&self) -> &ScoringConfig {
        &self.scoring
    }

    pub fn baselines(&self) -> Option<&[BaselineRecord]> {
        self.baselines.as_deref()
    }

    fn refresh_baselines(&mut self) {
        self.baselines = compute_baselines(&self.ds, &self.scoring)
            .ok()
            .filter(|b| !b.is_empty());
    }

    fn require_known(&self, p: &ParticipantId) -> StoreResult<()> {
        if self.ds.readings.contains_participant(p) {
            Ok(())
        } else {
            Err(StoreError::NotFound(format!("unknown participant `{p}`")))
        }
    }

    fn persist(&self, file: &str, header: &[&str], rows: &[Vec<String>]) -> StoreResult<()> {
        match &self.dir {
            Some(d) if !rows.is_empty() => append(d, file, header, rows),
            _ => Ok(()),
        }
    }

    /// Applies a batch atomically with respect to readers (caller holds the write lock).
    pub fn ingest(&mut self, items: &[ReadingIn]) -> StoreResult<IngestOutcome> {
        let mut out = IngestOutcome::default();
        // last accepted instant per stream within this batch
        let mut pending: BTreeMap<(ParticipantId, SocketId), Vec<Sample>> = BTreeMap::new();
        for (index, r) in items.iter().enumerate() {
            let reject = |out: &mut IngestOutcome, reason: &str| {
                out.rejected += 1;
                out.rejections.push(Rejection {
                    index,
                    reason: reason.to_owned(),
                });
            };
            if !r.watts.is_finite() || r.watts < 0.0 {
                reject(&mut out, "watts must be finite and non-negative");
                continue;
            }
            let t = r.timestamp.timestamp();
            let key = (r.participant_id.clone(), r.socket_id.clone());
            let stored = self.ds.readings.stream(&key.0, &key.1).unwrap_or(&[]);
            let batch = pending.get(&key).map(Vec::as_slice).unwrap_or(&[]);
            let exists = |s: &[Sample]| s.binary_search_by_key(&t, |x| x.t).is_ok();
            if exists(stored) || exists(batch) {
                out.duplicates += 1;
                continue;
            }
            let last = batch.last().or(stored.last()).map(|s| s.t);
            if last.is_some_and(|l| t < l) {
                reject(&mut out, "timestamp precedes the latest reading of its stream");
                continue;
            }
            pending.entry(key).or_default().push(Sample { t, watts: r.watts });
            out.accepted += 1;
        }

        let rows: Vec<Vec<String>> = pending
            .iter()
            .flat_map(|((p, s), v)| {
                v.iter()
                    .map(move |x| vec![format_utc(at(x.t)), p.to_string(), s.to_string(), x.watts.to_string()])
            })
            .collect();
        self.persist(READINGS_CSV, &["timestamp_utc", "participant_id", "socket_id", "watts"], &rows)?;

        let baseline = self.ds.baseline_phase().ok().cloned();
        let mut touches_baseline = false;
        for ((p, s), v) in pending {
            if let Some(b) = &baseline {
                touches_baseline |= v.iter().any(|x| {
                    // LOCF spill-over can reach one day past the last sample's date
                    let d = self.ds.clock.local_date(x.t);
                    b.contains(d) || d.pred_opt().is_some_and(|pd| b.contains(pd))
                });
            }
            self.ds.readings.stream_mut(&p, &s).extend(v);
        }
        if out.accepted > 0 {
            self.version += 1;
            if touches_baseline || self.baselines.is_none() {
                self.refresh_baselines();
            }
        }
        Ok(out)
    }

    pub fn post_incentive(&mut self, date: NaiveDate, amount_usd: u32) -> StoreResult<()> {
        if !is_valid_incentive(amount_usd) {
            return Err(StoreError::Unprocessable(format!(
                "amount {amount_usd} is not one of 5, 10, ..., 50"
            )));
        }
        if !self.ds.phase_on(date).is_some_and(|p| p.kind.has_incentive()) {
            return Err(StoreError::Unprocessable(format!("{date} is not in an incentive phase")));
        }
        if self.ds.incentives.amount_on(date).is_some() {
            return Err(StoreError::Conflict(format!("incentive for {date} already posted")));
        }
        self.persist(INCENTIVES_CSV, &["date", "amount_usd"], &[vec![date.to_string(), amount_usd.to_string()]])?;
        self.ds
            .incentives
            .insert(date, amount_usd)
            .map_err(|e| StoreError::Unprocessable(e.to_string()))?;
        self.version += 1;
        Ok(())
    }

    pub fn post_comfort(&mut self, p: &ParticipantId, level: i64, at_: DateTime<Utc>) -> StoreResult<ComfortReport> {
        self.require_known(p)?;
        if !is_valid_comfort_level(level) {
            return Err(StoreError::Unprocessable(format!("comfort level {level} outside -3..3")));
        }
        let report = ComfortReport {
            participant_id: p.clone(),
            timestamp: at(at_.timestamp()),
            level: level as i8,
        };
        self.persist(
            COMFORT_CSV,
            &["participant_id", "timestamp_utc", "level"],
            &[vec![p.to_string(), format_utc(report.timestamp), level.to_string()]],
        )?;
        self.ds.comfort.push(report.clone());
        self.version += 1;
        Ok(report)
    }

    /// Records a heartbeat at `t`: the participant is on the dashboard during
    /// `[t, t + 30 s)`. The union of these spans is the coalesced session set.
    pub fn heartbeat(&mut self, p: &ParticipantId, t: DateTime<Utc>) -> StoreResult<()> {
        self.require_known(p)?;
        let t = t.timestamp();
        self.persist(
            SCREENTIME_CSV,
            &["participant_id", "session_start_utc", "session_end_utc"],
            &[vec![p.to_string(), format_utc(at(t)), format_utc(at(t + HEARTBEAT_GAP_S))]],
        )?;
        self.ds.sessions.insert_merged(p, t, t + HEARTBEAT_GAP_S);
        self.version += 1;
        Ok(())
    }

    pub fn sessions(&self, p: &ParticipantId) -> StoreResult<Vec<(i64, i64)>> {
        self.require_known(p)?;
        Ok(self.ds.sessions.intervals(p).map(<[_]>::to_vec).unwrap_or_default())
    }

    pub fn screentime_seconds(&self, p: &ParticipantId, a: i64, b: i64) -> StoreResult<i64> {
        self.require_known(p)?;
        Ok(screentime_between(&self.ds.sessions, p, a, b))
    }

    pub fn leaderboard(&self, date: NaiveDate, as_of: i64) -> StoreResult<LeaderboardBody> {
        let baselines = self.baselines.as_deref().ok_or(StoreError::NoBaselines)?;
        let entries = leaderboard(&self.ds, baselines, date, as_of, &self.scoring);
        let (a, b) = self.ds.clock.window(date, 0, plugwatt_core::data::DAY_S);
        Ok(LeaderboardBody {
            date,
            as_of: at(as_of.clamp(a, b)),
            incentive_usd: self.ds.incentive_on(date),
            entries,
        })
    }

    pub fn baseline_of(&self, p: &ParticipantId) -> StoreResult<BaselineRecord> {
        self.require_known(p)?;
        self.baselines
            .as_deref()
            .ok_or(StoreError::NoBaselines)?
            .iter()
            .find(|b| &b.participant_id == p)
            .cloned()
            .ok_or_else(|| StoreError::NotFound(format!("no baseline for `{p}`")))
    }

    pub fn series(&self, p: &ParticipantId, from: i64, to: i64, resolution_s: i64) -> StoreResult<Vec<SeriesPoint>> {
        self.require_known(p)?;
        if resolution_s <= 0 || to <= from {
            return Err(StoreError::Unprocessable("need from < to and a positive resolution".into()));
        }
        if (to - from) / resolution_s > 10_000 {
            return Err(StoreError::Unprocessable("more than 10000 points requested".into()));
        }
        Ok((from..to)
            .step_by(resolution_s as usize)
            .map(|a| {
                let b = (a + resolution_s).min(to);
                SeriesPoint {
                    start: at(a),
                    individual_watts: mean_power_between(&self.ds.readings, p, a, b),
                    pool_watts: pool_mean_between(&self.ds, a, b),
                }
            })
            .collect())
    }

    /// Latest sample at or before `now` for each socket.
    pub fn sockets(&self, p: &ParticipantId, now: i64) -> StoreResult<Vec<SocketReading>> {
        self.require_known(p)?;
        let socks = self.ds.readings.sockets(p).expect("known participant");
        Ok(socks
            .iter()
            .filter_map(|(s, v)| {
                let i = v.partition_point(|x| x.t <= now);
                (i > 0).then(|| SocketReading {
                    socket_id: s.clone(),
                    watts: v[i - 1].watts,
                    timestamp: at(v[i - 1].t),
                })
            })
            .collect())
    }

    pub fn status(&self, now: i64) -> Status {
        let date = self.ds.clock.local_date(now);
        Status {
            site: self.ds.site,
            date,
            phase: self.ds.phase_on(date).cloned(),
            incentive_usd: self.ds.incentive_on(date),
            participants: self.ds.readings.participants().count(),
        }
    }

    /// Declares the end-of-day winner once; later calls return the stored record.
    ///
    /// Returns the winner (if any) and whether this call created it.
    pub fn declare(&mut self, date: NaiveDate, now: i64) -> StoreResult<(Option<Winner>, bool)> {
        if let Some(w) = self.winners.get(&date) {
            return Ok((Some(w.clone()), false));
        }
        let end = self.ds.clock.window(date, 0, plugwatt_core::data::DAY_S).1;
        if now < end {
            return Err(StoreError::Conflict(format!("{date} has not ended yet")));
        }
        let baselines = self.baselines.as_deref().ok_or(StoreError::NoBaselines)?;
        let Some(w) = declare_winner(&self.ds, baselines, date, &self.scoring) else {
            return Ok((None, false));
        };
        self.persist(
            WINNERS_CSV,
            &["date", "participant_id", "amount_usd"],
            &[vec![w.date.to_string(), w.participant_id.to_string(), w.amount_usd.to_string()]],
        )?;
        self.winners.insert(date, w.clone());
        self.version += 1;
        Ok((Some(w), true))
    }

    pub fn winners(&self) -> impl Iterator<Item = &Winner> {
        self.winners.values()
    }

    /// The earliest unacknowledged win of `p`, if any.
    pub fn notification(&self, p: &ParticipantId) -> StoreResult<Option<Winner>> {
        self.require_known(p)?;
        Ok(self
            .winners
            .values()
            .find(|w| &w.participant_id == p && !self.acknowledged.contains(&(p.clone(), w.date)))
            .cloned())
    }

    pub fn acknowledge(&mut self, p: &ParticipantId, date: NaiveDate) -> StoreResult<()> {
        self.require_known(p)?;
        match self.winners.get(&date) {
            Some(w) if &w.participant_id == p => {
                if self.acknowledged.insert((p.clone(), date)) {
                    self.version += 1;
                }
                Ok(())
            }
            _ => Err(StoreError::NotFound(format!("no win for `{p}` on {date}"))),
        }
    }
}
