//! Competition scoring: active baselines, live scores, ranking and winners.

use std::cmp::Ordering;

use chrono::{DateTime, NaiveDate, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::aggregation::{
    accumulate, active_mean_power, active_power_between, mean_power_between,
    DEFAULT_ACTIVE_THRESHOLD_W,
};
use crate::data::{Dataset, ParticipantId, DAY_S, HOUR_S};
use crate::error::{Error, Result};
use crate::stats::quantile;

/// Scoring parameters. Inactivity values are operational defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringConfig {
    pub threshold_w: f64,
    pub window_s: i64,
    pub var_threshold_w2: f64,
    /// Percentile (0..100) of baseline hourly totals taken as always-on floor.
    pub floor_percentile: f64,
    pub floor_factor: f64,
    /// Minimum fraction of the window that must be covered by samples.
    pub min_window_coverage: f64,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            threshold_w: DEFAULT_ACTIVE_THRESHOLD_W,
            window_s: 3600,
            var_threshold_w2: 0.25,
            floor_percentile: 5.0,
            floor_factor: 1.2,
            min_window_coverage: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRecord {
    pub participant_id: ParticipantId,
    pub active_baseline_watts: f64,
    pub computed_from: String,
    pub always_on_floor_watts: Option<f64>,
}

/// The score: 900 plus the percentage improvement over baseline.
pub fn score(baseline_average: f64, expt_average: f64) -> f64 {
    900.0 + 100.0 * (baseline_average - expt_average) / baseline_average
}

/// Mean of daily active means over the baseline phase, per participant.
///
/// Participants without any above-threshold baseline sample are omitted.
pub fn compute_baselines(ds: &Dataset, cfg: &ScoringConfig) -> Result<Vec<BaselineRecord>> {
    let phase = ds.baseline_phase()?;
    let mut out = Vec::new();
    for p in ds.readings.participants() {
        let days: Vec<f64> = phase
            .days()
            .filter_map(|d| active_mean_power(ds, p, d, cfg.threshold_w))
            .collect();
        if days.is_empty() {
            log::info!("participant {p} has no active baseline data; not scored");
            continue;
        }
        let active = days.iter().sum::<f64>() / days.len() as f64;
        if active <= 0.0 {
            continue;
        }
        let hourly: Vec<f64> = phase
            .days()
            .flat_map(|d| {
                let start = ds.clock.day_start(d);
                let end = ds.clock.window(d, 0, DAY_S).1;
                (0..)
                    .map(move |h| start + h * HOUR_S)
                    .take_while(move |a| *a < end)
                    .map(move |a| (a, (a + HOUR_S).min(end)))
            })
            .filter_map(|(a, b)| mean_power_between(&ds.readings, p, a, b))
            .collect();
        out.push(BaselineRecord {
            participant_id: p.clone(),
            active_baseline_watts: active,
            computed_from: phase.label.clone(),
            always_on_floor_watts: quantile(&hourly, cfg.floor_percentile / 100.0),
        });
    }
    Ok(out)
}

fn find<'a>(baselines: &'a [BaselineRecord], p: &ParticipantId) -> Option<&'a BaselineRecord> {
    baselines.iter().find(|b| &b.participant_id == p)
}

/// Clamps `as_of` into the local day `date`; returns `[day_start, as_of)`.
fn day_window(ds: &Dataset, date: NaiveDate, as_of: i64) -> (i64, i64) {
    let (a, b) = ds.clock.window(date, 0, DAY_S);
    (a, as_of.clamp(a, b))
}

/// Score from local midnight of `date` up to `as_of`; absent without active samples.
pub fn live_score(
    ds: &Dataset,
    baselines: &[BaselineRecord],
    participant: &ParticipantId,
    date: NaiveDate,
    as_of: i64,
    cfg: &ScoringConfig,
) -> Option<f64> {
    let base = find(baselines, participant)?;
    let (a, b) = day_window(ds, date, as_of);
    let expt = active_power_between(&ds.readings, participant, a, b, cfg.threshold_w)?;
    Some(score(base.active_baseline_watts, expt))
}

/// Sliding-window inactivity check over `[as_of − window, as_of)`.
///
/// True iff every socket's wattage variance is within the threshold and the
/// total mean power is below `floor_factor ×` the always-on floor.
/// Sparse windows give the benefit of the doubt.
pub fn detect_inactivity(
    ds: &Dataset,
    participant: &ParticipantId,
    as_of: i64,
    floor_w: Option<f64>,
    cfg: &ScoringConfig,
) -> bool {
    let Some(floor) = floor_w else {
        return false;
    };
    let Some(sockets) = ds.readings.sockets(participant) else {
        return false;
    };
    let (a, b) = (as_of - cfg.window_s, as_of);
    let mut covered = 0;
    let mut total = 0.0;
    for samples in sockets.values() {
        let acc = accumulate(samples, a, b, None);
        let Some(m) = acc.mean() else { continue };
        covered = covered.max(acc.seconds);
        total += m;
        let lo = samples.partition_point(|s| s.t < a);
        let hi = samples.partition_point(|s| s.t < b);
        let w: Vec<f64> = samples[lo..hi].iter().map(|s| s.watts).collect();
        if w.len() > 1 {
            let mu = w.iter().sum::<f64>() / w.len() as f64;
            let var = w.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / w.len() as f64;
            if var > cfg.var_threshold_w2 {
                return false;
            }
        }
    }
    if (covered as f64) < cfg.min_window_coverage * cfg.window_s as f64 {
        return false;
    }
    total < cfg.floor_factor * floor
}

/// A participant's standing before ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreCandidate {
    pub participant_id: ParticipantId,
    pub score: f64,
    pub inactive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub participant_id: ParticipantId,
    pub date: NaiveDate,
    pub as_of: DateTime<Utc>,
    pub score: f64,
    pub rank: u32,
    pub inactive_flag: bool,
}

/// Active before inactive, then score descending, then participant id.
fn leaderboard_order(a: &ScoreCandidate, b: &ScoreCandidate) -> Ordering {
    a.inactive
        .cmp(&b.inactive)
        .then_with(|| b.score.total_cmp(&a.score))
        .then_with(|| a.participant_id.cmp(&b.participant_id))
}

/// Assigns ranks 1..n to the candidates.
pub fn rank_leaderboard(
    mut candidates: Vec<ScoreCandidate>,
    date: NaiveDate,
    as_of: DateTime<Utc>,
) -> Vec<ScoreEntry> {
    candidates.sort_by(leaderboard_order);
    candidates
        .into_iter()
        .enumerate()
        .map(|(i, c)| ScoreEntry {
            participant_id: c.participant_id,
            date,
            as_of,
            score: c.score,
            rank: i as u32 + 1,
            inactive_flag: c.inactive,
        })
        .collect()
}

/// Leaderboard snapshot for `date` as of `as_of` (clamped into the day).
pub fn leaderboard(
    ds: &Dataset,
    baselines: &[BaselineRecord],
    date: NaiveDate,
    as_of: i64,
    cfg: &ScoringConfig,
) -> Vec<ScoreEntry> {
    let (_, at) = day_window(ds, date, as_of);
    let candidates = baselines
        .iter()
        .filter_map(|b| {
            let s = live_score(ds, baselines, &b.participant_id, date, at, cfg)?;
            Some(ScoreCandidate {
                participant_id: b.participant_id.clone(),
                score: s,
                inactive: detect_inactivity(ds, &b.participant_id, at, b.always_on_floor_watts, cfg),
            })
        })
        .collect();
    let as_of = Utc.timestamp_opt(at, 0).single().expect("valid instant");
    rank_leaderboard(candidates, date, as_of)
}

/// Head of the leaderboard unless it is flagged inactive.
pub fn winner_of(entries: &[ScoreEntry]) -> Option<&ScoreEntry> {
    entries.first().filter(|e| !e.inactive_flag)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Winner {
    pub date: NaiveDate,
    pub participant_id: ParticipantId,
    pub amount_usd: u32,
}

/// End-of-day winner for an incentive day; `None` outside incentive phases.
///
/// Inactivity is judged over the whole local day rather than the trailing
/// window, which at midnight would flag everyone who went home.
pub fn declare_winner(
    ds: &Dataset,
    baselines: &[BaselineRecord],
    date: NaiveDate,
    cfg: &ScoringConfig,
) -> Option<Winner> {
    let amount = ds.incentive_on(date)?;
    let (start, end) = ds.clock.window(date, 0, DAY_S);
    let day_cfg = ScoringConfig {
        window_s: end - start,
        ..*cfg
    };
    let board = leaderboard(ds, baselines, date, end, &day_cfg);
    winner_of(&board).map(|e| Winner {
        date,
        participant_id: e.participant_id.clone(),
        amount_usd: amount,
    })
}

/// Baselines or an error when none can be computed.
pub fn require_baselines(ds: &Dataset, cfg: &ScoringConfig) -> Result<Vec<BaselineRecord>> {
    let b = compute_baselines(ds, cfg)?;
    if b.is_empty() {
        return Err(Error::InsufficientSample("no participant has active baseline data".into()));
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{
        IncentiveSchedule, Phase, PhaseCalendar, PhaseKind, ReadingStore, Sample, SessionIndex,
        Site, SiteClock, SocketId,
    };
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn score_anchors() {
        assert_abs_diff_eq!(score(100.0, 80.0), 920.0, epsilon = 1e-12);
        assert_abs_diff_eq!(score(70.0, 70.0), 900.0, epsilon = 1e-12);
        assert_abs_diff_eq!(score(50.0, 60.0), 880.0, epsilon = 1e-12);
    }

    fn cand(p: &str, s: f64, inactive: bool) -> ScoreCandidate {
        ScoreCandidate {
            participant_id: p.into(),
            score: s,
            inactive,
        }
    }

    fn order(c: Vec<ScoreCandidate>) -> Vec<String> {
        let d = NaiveDate::from_ymd_opt(2016, 10, 18).unwrap();
        rank_leaderboard(c, d, Utc::now())
            .into_iter()
            .map(|e| e.participant_id.0)
            .collect()
    }

    #[test]
    fn ranking_rules() {
        assert_eq!(order(vec![cand("A", 910.0, false), cand("B", 925.0, false)]), ["B", "A"]);
        assert_eq!(order(vec![cand("B", 910.0, false), cand("A", 910.0, false)]), ["A", "B"]);
        assert_eq!(order(vec![cand("B", 990.0, true), cand("A", 905.0, false)]), ["A", "B"]);
    }

    #[test]
    fn winner_rules() {
        let d = NaiveDate::from_ymd_opt(2016, 10, 18).unwrap();
        let board = rank_leaderboard(vec![cand("A", 901.0, false), cand("B", 950.0, false)], d, Utc::now());
        assert_eq!(winner_of(&board).unwrap().participant_id.as_str(), "B");
        assert!(winner_of(&[]).is_none());
        let idle = rank_leaderboard(vec![cand("A", 901.0, true), cand("B", 950.0, true)], d, Utc::now());
        assert!(winner_of(&idle).is_none());
    }

    fn dataset_with(streams: &[(&str, &str, i64, Vec<f64>)]) -> Dataset {
        let mut st = ReadingStore::new();
        for (p, s, start, w) in streams {
            for (i, x) in w.iter().enumerate() {
                st.push(&(*p).into(), &SocketId::from(*s), Sample { t: start + 60 * i as i64, watts: *x });
            }
        }
        Dataset {
            site: Site::Cmu,
            clock: SiteClock::default(),
            calendar: PhaseCalendar::field_experiment_2016(),
            readings: st,
            sessions: SessionIndex::default(),
            incentives: IncentiveSchedule::new(),
            comfort: vec![],
        }
    }

    #[test]
    fn inactivity_floor_rule() {
        let ds = dataset_with(&[("p", "a", 0, vec![30.0; 60])]);
        let cfg = ScoringConfig::default();
        assert!(detect_inactivity(&ds, &"p".into(), 3600, Some(28.0), &cfg));
        assert!(!detect_inactivity(&ds, &"p".into(), 3600, Some(10.0), &cfg));
        let varying: Vec<f64> = (0..60).map(|i| if i % 2 == 0 { 35.0 } else { 55.0 }).collect();
        let ds = dataset_with(&[("p", "a", 0, varying)]);
        assert!(!detect_inactivity(&ds, &"p".into(), 3600, Some(50.0), &cfg));
        // sparse window: only 10 minutes of data
        let ds = dataset_with(&[("p", "a", 3000, vec![30.0; 10])]);
        assert!(!detect_inactivity(&ds, &"p".into(), 3600, Some(28.0), &cfg));
    }

    #[test]
    fn baselines_skip_absent_days() {
        let clock = SiteClock::default();
        let day = |n: u32| NaiveDate::from_ymd_opt(2016, 9, 12 + n).unwrap();
        let mut streams = Vec::new();
        for (i, w) in [(0, 40.0), (2, 60.0), (3, 50.0)] {
            streams.push(("p", "a", clock.day_start(day(i)) + 9 * 3600, vec![w; 60]));
        }
        // day 1 has only sub-threshold samples
        streams.push(("p", "a", clock.day_start(day(1)) + 9 * 3600, vec![2.0; 60]));
        streams.sort_by_key(|s| s.2);
        let mut ds = dataset_with(&streams);
        ds.calendar = PhaseCalendar::new(vec![Phase {
            site: Site::Cmu,
            kind: PhaseKind::Baseline,
            label: "P1C".into(),
            start_date: day(0),
            end_date: day(3),
        }])
        .unwrap();
        let b = compute_baselines(&ds, &ScoringConfig::default()).unwrap();
        assert_eq!(b.len(), 1);
        assert_abs_diff_eq!(b[0].active_baseline_watts, 50.0, epsilon = 1e-12);
        assert_eq!(b[0].computed_from, "P1C");
    }

    proptest! {
        #[test]
        fn score_is_scale_invariant(b in 0.1f64..1e4, e in 0.0f64..1e4, k in 1e-3f64..1e3) {
            let s = score(b, e);
            prop_assert!((score(k * b, k * e) - s).abs() <= 1e-9 * s.abs().max(1.0));
        }

        #[test]
        fn score_decreases_in_expt(b in 0.1f64..1e4, e in 0.0f64..1e4, de in 1e-3f64..100.0) {
            prop_assert!(score(b, e + de) < score(b, e));
        }

        #[test]
        fn ranks_are_a_permutation(scores in proptest::collection::vec((800.0f64..1000.0, any::<bool>()), 0..20)) {
            let c: Vec<ScoreCandidate> = scores
                .iter()
                .enumerate()
                .map(|(i, (s, f))| cand(&format!("p{i:02}"), (*s * 4.0).round() / 4.0, *f))
                .collect();
            let d = NaiveDate::from_ymd_opt(2016, 10, 18).unwrap();
            let now = Utc::now();
            let mut rev = c.clone();
            rev.reverse();
            let a = rank_leaderboard(c, d, now);
            let b = rank_leaderboard(rev, d, now);
            prop_assert_eq!(&a, &b);
            let ranks: Vec<u32> = a.iter().map(|e| e.rank).collect();
            prop_assert_eq!(ranks, (1..=a.len() as u32).collect::<Vec<_>>());
            for w in a.windows(2) {
                prop_assert!(w[0].inactive_flag <= w[1].inactive_flag);
                if w[0].inactive_flag == w[1].inactive_flag {
                    prop_assert!(w[0].score >= w[1].score);
                }
            }
        }
    }
}
