//! Screentime: aggregate duration of active dashboard sessions.

use chrono::NaiveDate;

use crate::data::{Dataset, ParticipantId, SessionIndex};

/// Sorts and unions half-open intervals.
///
/// Returns the merged intervals and how many input intervals overlapped a
/// predecessor (touching intervals are joined but not counted).
pub fn merge_intervals(mut intervals: Vec<(i64, i64)>) -> (Vec<(i64, i64)>, usize) {
    intervals.retain(|(a, b)| b > a);
    intervals.sort_unstable();
    let mut out: Vec<(i64, i64)> = Vec::with_capacity(intervals.len());
    let mut overlaps = 0;
    for (a, b) in intervals {
        match out.last_mut() {
            Some(last) if a <= last.1 => {
                if a < last.1 {
                    overlaps += 1;
                }
                last.1 = last.1.max(b);
            }
            _ => out.push((a, b)),
        }
    }
    (out, overlaps)
}

/// Total overlap in seconds between merged `intervals` and `[a, b)`.
pub fn overlap_seconds(intervals: &[(i64, i64)], a: i64, b: i64) -> i64 {
    if b <= a {
        return 0;
    }
    // intervals are sorted and disjoint; skip those ending before `a`
    let first = intervals.partition_point(|(_, end)| *end <= a);
    intervals[first..]
        .iter()
        .take_while(|(start, _)| *start < b)
        .map(|(s, e)| (*e).min(b) - (*s).max(a))
        .filter(|d| *d > 0)
        .sum()
}

/// Screentime of `participant` within the absolute window `[a, b)`.
///
/// An unknown participant yields 0 and a warning.
pub fn screentime_between(index: &SessionIndex, participant: &ParticipantId, a: i64, b: i64) -> i64 {
    match index.intervals(participant) {
        Some(iv) => overlap_seconds(iv, a, b),
        None => {
            log::warn!("screentime requested for unknown participant {participant}");
            0
        }
    }
}

/// Screentime of `participant` during `[t0, tf)` seconds of local `day`.
pub fn screentime_in_interval(
    dataset: &Dataset,
    participant: &ParticipantId,
    day: NaiveDate,
    t0: i64,
    tf: i64,
) -> i64 {
    let (a, b) = dataset.clock.window(day, t0, tf);
    screentime_between(&dataset.sessions, participant, a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const H: i64 = 3600;

    fn idx(p: &str, iv: &[(i64, i64)]) -> SessionIndex {
        let mut s = SessionIndex::default();
        for (a, b) in iv {
            s.insert_merged(&ParticipantId::from(p), *a, *b);
        }
        s
    }

    #[test]
    fn full_overlap_and_empty() {
        let s = idx("p", &[(10 * H, 11 * H)]);
        assert_eq!(screentime_between(&s, &"p".into(), 10 * H, 11 * H), 3600);
        assert_eq!(screentime_between(&s, &"p".into(), 12 * H, 13 * H), 0);
        assert_eq!(screentime_between(&s, &"q".into(), 10 * H, 11 * H), 0);
    }

    #[test]
    fn partial_sessions_against_hour() {
        // 10:00-10:10 and 10:50-11:05 against 10:00-11:00
        let s = idx("p", &[(10 * H, 10 * H + 600), (10 * H + 3000, 11 * H + 300)]);
        assert_eq!(screentime_between(&s, &"p".into(), 10 * H, 11 * H), 1200);
    }

    #[test]
    fn overlapping_sessions_merge_with_one_warning() {
        let (m, n) = merge_intervals(vec![(9 * H, 10 * H), (9 * H + 1800, 11 * H)]);
        assert_eq!(m, vec![(9 * H, 11 * H)]);
        assert_eq!(n, 1);
        let (m, n) = merge_intervals(vec![(0, 10), (10, 20)]);
        assert_eq!(m, vec![(0, 20)]);
        assert_eq!(n, 0);
    }

    fn brute_force(intervals: &[(i64, i64)], a: i64, b: i64) -> i64 {
        (a..b)
            .filter(|t| intervals.iter().any(|(s, e)| s <= t && t < e))
            .count() as i64
    }

    proptest! {
        #[test]
        fn merged_overlap_matches_pointwise_union(
            raw in proptest::collection::vec((0i64..2000, 1i64..300), 0..12),
            a in 0i64..2400, len in 0i64..800,
        ) {
            let iv: Vec<(i64, i64)> = raw.iter().map(|(s, d)| (*s, s + d)).collect();
            let (merged, _) = merge_intervals(iv.clone());
            prop_assert_eq!(overlap_seconds(&merged, a, a + len), brute_force(&iv, a, a + len));
        }

        #[test]
        fn partition_additivity(
            raw in proptest::collection::vec((0i64..86_000, 1i64..7200), 0..10),
        ) {
            let iv: Vec<(i64, i64)> = raw.iter().map(|(s, d)| (*s, s + d)).collect();
            let (merged, _) = merge_intervals(iv);
            let hours: i64 = (0..24).map(|h| overlap_seconds(&merged, h * H, (h + 1) * H)).sum();
            prop_assert_eq!(hours, overlap_seconds(&merged, 0, 86_400));
        }
    }
}
