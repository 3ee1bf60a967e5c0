//! Matched-pairs inference on baseline-minus-experiment daily means.

use chrono::{NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::aggregation::{baseline_weekday_means, daily_mean, matched_pairs_with};
use crate::data::{Dataset, ParticipantId, Site};
use crate::error::{Error, Result};
use crate::stats::{mean, quantile_sorted, sample_sd, student_t_quantile, student_t_two_tailed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub participant_id: ParticipantId,
    pub day: NaiveDate,
    pub weekday: Weekday,
    pub baseline_watts: f64,
    pub expt_watts: f64,
    /// baseline − experiment
    pub diff_watts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferentialSample {
    pub site: Site,
    pub phase: String,
    pub observations: Vec<Observation>,
    pub baseline_pool_mean_watts: f64,
}

impl DifferentialSample {
    pub fn diffs(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.diff_watts).collect()
    }

    pub fn expt_pool_mean_watts(&self) -> f64 {
        let e: Vec<f64> = self.observations.iter().map(|o| o.expt_watts).collect();
        mean(&e).unwrap_or(f64::NAN)
    }
}

/// One observation per (participant, experiment day) with a weekday match.
///
/// Observations are ordered by participant, then date.
pub fn build_differential_sample(ds: &Dataset, expt_phase: &str) -> Result<DifferentialSample> {
    let baseline = ds.baseline_phase()?;
    let expt = ds.phase(expt_phase)?;
    if expt.kind == crate::data::PhaseKind::Baseline {
        return Err(Error::InvalidArgument("experiment phase must not be the baseline".into()));
    }
    let mut observations = Vec::new();
    for p in ds.readings.participants() {
        let reference = baseline_weekday_means(ds, baseline, p);
        for pair in matched_pairs_with(ds, &reference, expt, p) {
            observations.push(Observation {
                participant_id: p.clone(),
                day: pair.expt_day,
                weekday: pair.weekday,
                baseline_watts: pair.baseline_mean,
                expt_watts: pair.expt_mean,
                diff_watts: pair.baseline_mean - pair.expt_mean,
            });
        }
    }
    if observations.len() < 2 {
        return Err(Error::InsufficientSample(format!(
            "{} matched pairs in phase {}",
            observations.len(),
            expt.label
        )));
    }
    let base: Vec<f64> = observations.iter().map(|o| o.baseline_watts).collect();
    Ok(DifferentialSample {
        site: ds.site,
        phase: expt.label.clone(),
        baseline_pool_mean_watts: mean(&base).expect("non-empty"),
        observations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub n: usize,
    pub df: usize,
    pub mean_diff_watts: f64,
    pub sd_diff_watts: f64,
    pub t_stat: f64,
    pub p_two_tailed: f64,
    pub ci95_watts: [f64; 2],
    pub ci95_pct: [f64; 2],
    pub mean_reduction_pct: f64,
    pub baseline_pool_mean_watts: f64,
}

/// Two-tailed paired t-test and 95% interval on already-differenced values.
pub fn paired_t_test_on(diffs: &[f64], baseline_pool_mean_watts: f64) -> Result<TestResult> {
    let n = diffs.len();
    if n < 2 {
        return Err(Error::InsufficientSample(format!("n = {n}; need at least 2")));
    }
    let m = mean(diffs).expect("non-empty");
    let sd = sample_sd(diffs).expect("n >= 2");
    let df = n - 1;
    let pct = |w: f64| 100.0 * w / baseline_pool_mean_watts;
    let (t, p, ci) = if sd == 0.0 {
        let t = if m == 0.0 { 0.0 } else { m.signum() * f64::INFINITY };
        (t, if m == 0.0 { 1.0 } else { 0.0 }, [m, m])
    } else {
        let se = sd / (n as f64).sqrt();
        let t = m / se;
        let half = student_t_quantile(0.975, df as f64) * se;
        (t, student_t_two_tailed(t, df as f64), [m - half, m + half])
    };
    Ok(TestResult {
        n,
        df,
        mean_diff_watts: m,
        sd_diff_watts: sd,
        t_stat: t,
        p_two_tailed: p,
        ci95_watts: ci,
        ci95_pct: [pct(ci[0]), pct(ci[1])],
        mean_reduction_pct: pct(m),
        baseline_pool_mean_watts,
    })
}

pub fn paired_t_test(sample: &DifferentialSample) -> Result<TestResult> {
    paired_t_test_on(&sample.diffs(), sample.baseline_pool_mean_watts)
}

/// Five-number summary plus mean of daily energy (kWh/day).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub phase: String,
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

impl SummaryStats {
    /// Summary of daily mean powers in watts, reported as kWh/day.
    pub fn from_daily_watts(phase: &str, watts: &[f64]) -> Result<Self> {
        if watts.is_empty() {
            return Err(Error::EmptyPhase(phase.to_owned()));
        }
        let mut kwh: Vec<f64> = watts.iter().map(|w| w * 24.0 / 1000.0).collect();
        kwh.sort_by(f64::total_cmp);
        let q = |p| quantile_sorted(&kwh, p).expect("non-empty");
        Ok(Self {
            phase: phase.to_owned(),
            n: kwh.len(),
            min: kwh[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: kwh[kwh.len() - 1],
            mean: mean(&kwh).expect("non-empty"),
        })
    }
}

/// Summary over every (participant, day) daily mean within the phase.
pub fn summarize_phase(ds: &Dataset, phase: &str) -> Result<SummaryStats> {
    let ph = ds.phase(phase)?;
    let watts: Vec<f64> = ds
        .readings
        .participants()
        .flat_map(|p| ph.days().filter_map(move |d| daily_mean(ds, p, d)))
        .map(|m| m.mean_watts)
        .collect();
    SummaryStats::from_daily_watts(&ph.label, &watts)
}

/// A published phase result, as reported.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PublishedResult {
    pub label: &'static str,
    pub site: Site,
    pub df: usize,
    pub t: f64,
    pub p: f64,
    pub baseline_mean_watts: f64,
    pub expt_mean_watts: f64,
    pub ci95_watts: [f64; 2],
    pub ci95_pct: [f64; 2],
    pub mean_reduction_pct: f64,
}

/// Published results of the 2016 field experiments.
pub fn published_results() -> Vec<PublishedResult> {
    vec![
        PublishedResult {
            label: "NASA feedback (P3N)",
            site: Site::Nasa,
            df: 86,
            t: 3.64,
            p: 4.61e-4,
            baseline_mean_watts: 51.51,
            expt_mean_watts: 48.86,
            ci95_watts: [2.22, 7.57],
            ci95_pct: [4.32, 14.71],
            mean_reduction_pct: 9.52,
        },
        PublishedResult {
            label: "CMU incentive (P2C)",
            site: Site::Cmu,
            df: 74,
            t: 1.62,
            p: 0.11,
            baseline_mean_watts: 61.09,
            expt_mean_watts: 53.91,
            ci95_watts: [-1.84, 17.63],
            ci95_pct: [-3.01, 28.87],
            mean_reduction_pct: 12.93,
        },
        PublishedResult {
            label: "CMU feedback (P3C)",
            site: Site::Cmu,
            df: 75,
            t: 2.26,
            p: 0.03,
            baseline_mean_watts: 61.09,
            expt_mean_watts: 49.27,
            ci95_watts: [1.58, 24.82],
            ci95_pct: [2.59, 40.63],
            mean_reduction_pct: 21.61,
        },
        PublishedResult {
            label: "CMU feedback & incentive (P4C)",
            site: Site::Cmu,
            df: 67,
            t: 2.30,
            p: 0.02,
            baseline_mean_watts: 61.09,
            expt_mean_watts: 50.33,
            ci95_watts: [1.96, 27.63],
            ci95_pct: [3.21, 45.24],
            mean_reduction_pct: 24.22,
        },
    ]
}

/// Quantities re-derived from one published result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyRow {
    pub published: PublishedResult,
    /// Paired mean difference taken as the published CI midpoint.
    pub mean_diff_watts: f64,
    /// Difference of the published phase means (differs from the paired mean).
    pub phase_mean_diff_watts: f64,
    pub implied_se_watts: f64,
    pub implied_sd_watts: f64,
    pub p_two_tailed: f64,
    /// CI recomputed from (t, df, midpoint).
    pub ci95_watts: [f64; 2],
    /// Published watt CI over the published baseline mean.
    pub ci95_pct: [f64; 2],
    pub mean_reduction_pct: f64,
    pub delta_p: f64,
    pub delta_ci95_watts: [f64; 2],
    pub delta_ci95_pct: [f64; 2],
    pub delta_mean_reduction_pct: f64,
}

/// Recomputes p-values, intervals and percentages from published summaries.
pub fn paper_consistency_report() -> Vec<ConsistencyRow> {
    published_results()
        .into_iter()
        .map(|r| {
            let n = (r.df + 1) as f64;
            let mid = 0.5 * (r.ci95_watts[0] + r.ci95_watts[1]);
            let se = mid / r.t;
            let half = student_t_quantile(0.975, r.df as f64) * se;
            let ci = [mid - half, mid + half];
            let pct = |w: f64| 100.0 * w / r.baseline_mean_watts;
            let ci_pct = [pct(r.ci95_watts[0]), pct(r.ci95_watts[1])];
            let p = student_t_two_tailed(r.t, r.df as f64);
            ConsistencyRow {
                mean_diff_watts: mid,
                phase_mean_diff_watts: r.baseline_mean_watts - r.expt_mean_watts,
                implied_se_watts: se,
                implied_sd_watts: se * n.sqrt(),
                p_two_tailed: p,
                ci95_watts: ci,
                ci95_pct: ci_pct,
                mean_reduction_pct: pct(mid),
                delta_p: p - r.p,
                delta_ci95_watts: [ci[0] - r.ci95_watts[0], ci[1] - r.ci95_watts[1]],
                delta_ci95_pct: [ci_pct[0] - r.ci95_pct[0], ci_pct[1] - r.ci95_pct[1]],
                delta_mean_reduction_pct: pct(mid) - r.mean_reduction_pct,
                published: r,
            }
        })
        .collect()
}
