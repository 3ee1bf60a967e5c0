//! Synthetic experiment generator.
//!
//! Each participant has one always-on device (a desk phone) and a few
//! workday-gated devices that sit in standby outside working hours. A phase
//! reduction scales every socket's level on the days of that phase, so the
//! configured reduction is also the true ratio of daily means.

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate, Weekday};
use chrono_tz::Tz;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arx::{ArxCoefficients, DaySeries, HourCell};
use crate::data::{
    Dataset, IncentiveSchedule, ParticipantId, Phase, PhaseCalendar, PhaseKind, ReadingStore,
    Sample, SessionIndex, Site, SiteClock, SocketId, HOUR_S, INCENTIVE_AMOUNTS,
};
use crate::error::{Error, Result};
use crate::screentime::screentime_between;

/// Device labels; the first is the always-on device.
pub const SOCKET_LABELS: [&str; 6] = ["phone", "monitor", "desktop", "laptop", "docking_station", "headset"];

/// True multiplicative reduction by phase kind, each in `[0, 1)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhaseReductions {
    pub incentive: f64,
    pub feedback: f64,
    pub feedback_and_incentive: f64,
}

impl PhaseReductions {
    pub fn for_kind(&self, kind: PhaseKind) -> f64 {
        match kind {
            PhaseKind::Baseline => 0.0,
            PhaseKind::Incentive => self.incentive,
            PhaseKind::Feedback => self.feedback,
            PhaseKind::FeedbackAndIncentive => self.feedback_and_incentive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub site: Site,
    pub tz: String,
    pub n_participants: usize,
    /// Sockets per participant, including the always-on one (1..=6).
    pub sockets_per_participant: usize,
    pub phases: Vec<Phase>,
    pub sample_period_s: i64,
    pub always_on_watts_mean: f64,
    pub always_on_watts_sd: f64,
    pub standby_watts: f64,
    /// Mean total draw of the workday devices while active.
    pub active_watts_mean: f64,
    pub active_watts_sd: f64,
    pub workday_start_hour: f64,
    pub workday_start_sd_hours: f64,
    pub workday_hours: f64,
    pub reduction: PhaseReductions,
    pub sessions_per_day: f64,
    pub session_mean_s: f64,
    pub incentive_seed: u64,
    /// Per-sample Gaussian jitter of active sockets (W).
    pub active_jitter_w: f64,
    /// Per-sample jitter of standby and always-on sockets (W).
    pub idle_jitter_w: f64,
    /// Relative sd of the per-day level multiplier.
    pub daily_sd: f64,
    pub seed: u64,
    /// When set, experiment-phase pool load is additionally driven by this
    /// hourly ARX process (watts of reduction).
    pub arx: Option<ArxCoefficients>,
    /// Extra always-on load that keeps ARX-driven reductions non-negative.
    pub arx_headroom_w: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let cal = PhaseCalendar::field_experiment_2016();
        Self {
            site: Site::Cmu,
            tz: "America/Los_Angeles".into(),
            n_participants: 16,
            sockets_per_participant: 4,
            phases: cal.for_site(Site::Cmu).cloned().collect(),
            sample_period_s: 60,
            always_on_watts_mean: 8.0,
            always_on_watts_sd: 2.0,
            standby_watts: 1.0,
            active_watts_mean: 60.0,
            active_watts_sd: 15.0,
            workday_start_hour: 9.0,
            workday_start_sd_hours: 0.5,
            workday_hours: 8.0,
            reduction: PhaseReductions {
                incentive: 0.12,
                feedback: 0.20,
                feedback_and_incentive: 0.24,
            },
            sessions_per_day: 3.0,
            session_mean_s: 120.0,
            incentive_seed: 17,
            active_jitter_w: 2.0,
            idle_jitter_w: 0.2,
            daily_sd: 0.08,
            seed: 1,
            arx: None,
            arx_headroom_w: 30.0,
        }
    }
}

impl SynthConfig {
    /// `weeks_baseline` weeks of baseline followed by `weeks_feedback` weeks
    /// of feedback, starting on a Monday.
    pub fn two_phase(
        site: Site,
        start: NaiveDate,
        weeks_baseline: u32,
        weeks_feedback: u32,
        feedback_reduction: f64,
    ) -> Self {
        let b_end = start + chrono::Duration::days(7 * i64::from(weeks_baseline) - 1);
        let f_end = b_end + chrono::Duration::days(7 * i64::from(weeks_feedback));
        let suffix = if site == Site::Nasa { "N" } else { "C" };
        let phase = |kind, n: u32, s, e| Phase {
            site,
            kind,
            label: format!("P{n}{suffix}"),
            start_date: s,
            end_date: e,
        };
        Self {
            site,
            phases: vec![
                phase(PhaseKind::Baseline, 1, start, b_end),
                phase(PhaseKind::Feedback, 3, b_end.succ_opt().expect("date"), f_end),
            ],
            reduction: PhaseReductions {
                feedback: feedback_reduction,
                ..Default::default()
            },
            ..Self::default()
        }
    }

    pub fn clock(&self) -> Result<SiteClock> {
        let tz: Tz = self
            .tz
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("unknown timezone `{}`", self.tz)))?;
        Ok(SiteClock::new(tz))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_owned()));
        let r = &self.reduction;
        if [r.incentive, r.feedback, r.feedback_and_incentive]
            .iter()
            .any(|x| !(0.0..1.0).contains(x))
        {
            return bad("reductions must lie in [0, 1)");
        }
        let nonneg = [
            self.always_on_watts_mean,
            self.always_on_watts_sd,
            self.standby_watts,
            self.active_watts_mean,
            self.active_watts_sd,
            self.workday_start_sd_hours,
            self.workday_hours,
            self.sessions_per_day,
            self.session_mean_s,
            self.active_jitter_w,
            self.idle_jitter_w,
            self.daily_sd,
            self.arx_headroom_w,
        ];
        if nonneg.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return bad("rates, levels and noise scales must be finite and non-negative");
        }
        if self.n_participants == 0 {
            return bad("n_participants must be at least 1");
        }
        if !(1..=SOCKET_LABELS.len()).contains(&self.sockets_per_participant) {
            return bad("sockets_per_participant must be 1..=6");
        }
        if self.sample_period_s <= 0 {
            return bad("sample_period_s must be positive");
        }
        if self.workday_hours > 24.0 {
            return bad("workday_hours must be at most 24");
        }
        self.clock()?;
        PhaseCalendar::new(self.phases.clone())?;
        if !self.phases.iter().all(|p| p.site == self.site) {
            return bad("every phase must belong to the configured site");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantTruth {
    pub participant_id: ParticipantId,
    pub always_on_watts: f64,
    pub active_watts: f64,
    /// Workday window as seconds after local midnight.
    pub workday_start_s: i64,
    pub workday_end_s: i64,
}

/// What the generator put into the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    /// True reduction by phase label.
    pub reduction_by_phase: BTreeMap<String, f64>,
    pub participants: Vec<ParticipantTruth>,
    pub arx: Option<ArxCoefficients>,
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub dataset: Dataset,
    pub truth: SyntheticTruth,
}

fn is_workday(d: NaiveDate) -> bool {
    !matches!(d.weekday(), Weekday::Sat | Weekday::Sun)
}

/// Incentive amounts for `dates`.
///
/// Ten dates get a shuffled permutation of the ten allowed amounts; any
/// other count falls back to independent uniform draws.
pub fn generate_incentive_schedule(seed: u64, dates: &[NaiveDate]) -> Result<IncentiveSchedule> {
    if dates.is_empty() {
        return Err(Error::InvalidArgument("incentive schedule needs at least one date".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amounts: Vec<u32> = if dates.len() == INCENTIVE_AMOUNTS.len() {
        let mut a = INCENTIVE_AMOUNTS.to_vec();
        a.shuffle(&mut rng);
        a
    } else {
        log::warn!(
            "{} incentive dates (not {}); drawing amounts independently",
            dates.len(),
            INCENTIVE_AMOUNTS.len()
        );
        dates
            .iter()
            .map(|_| *INCENTIVE_AMOUNTS.choose(&mut rng).expect("non-empty"))
            .collect()
    };
    let mut schedule = IncentiveSchedule::new();
    for (d, a) in dates.iter().zip(amounts) {
        schedule.insert(*d, a)?;
    }
    Ok(schedule)
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const STREAM_PROFILES: u64 = 1;
const STREAM_ARX: u64 = 2;
const STREAM_SESSIONS: u64 = 1 << 20;
const STREAM_LOAD: u64 = 1 << 21;

/// Builds a dataset from `config`; identical configs give identical data.
pub fn generate_synthetic(config: &SynthConfig) -> Result<SyntheticDataset> {
    config.validate()?;
    let clock = config.clock()?;
    let calendar = PhaseCalendar::new(config.phases.clone())?;
    let phases: Vec<Phase> = calendar.for_site(config.site).cloned().collect();
    let first = phases.iter().map(|p| p.start_date).min().expect("baseline exists");
    let last = phases.iter().map(|p| p.end_date).max().expect("baseline exists");
    let days: Vec<NaiveDate> = first.iter_days().take_while(|d| *d <= last).collect();

    let width = config.n_participants.to_string().len().max(2);
    let mut prof_rng = stream_rng(config.seed, STREAM_PROFILES);
    let participants: Vec<ParticipantTruth> = (0..config.n_participants)
        .map(|i| {
            let z = |rng: &mut ChaCha8Rng| rng.sample::<f64, _>(StandardNormal);
            let always_on = (config.always_on_watts_mean + config.always_on_watts_sd * z(&mut prof_rng)).max(0.5);
            let active = (config.active_watts_mean + config.active_watts_sd * z(&mut prof_rng))
                .max(0.25 * config.active_watts_mean);
            let start_h = (config.workday_start_hour + config.workday_start_sd_hours * z(&mut prof_rng))
                .clamp(0.0, 24.0 - config.workday_hours);
            let start = (start_h * HOUR_S as f64).round() as i64;
            ParticipantTruth {
                participant_id: format!("p{:0width$}", i + 1).into(),
                always_on_watts: always_on,
                active_watts: active,
                workday_start_s: start,
                workday_end_s: start + (config.workday_hours * HOUR_S as f64).round() as i64,
            }
        })
        .collect();

    // dashboard sessions in every experiment phase
    let mut sessions = SessionIndex::default();
    for (i, p) in participants.iter().enumerate() {
        let mut rng = stream_rng(config.seed, STREAM_SESSIONS + i as u64);
        for d in &days {
            let in_expt = phases.iter().any(|ph| ph.kind != PhaseKind::Baseline && ph.contains(*d));
            if !in_expt || !is_workday(*d) || config.sessions_per_day == 0.0 {
                continue;
            }
            let n = Poisson::new(config.sessions_per_day).expect("positive rate").sample(&mut rng) as u64;
            let exp = Exp::new(1.0 / config.session_mean_s.max(1.0)).expect("positive rate");
            let day0 = clock.day_start(*d);
            for _ in 0..n {
                let start = day0 + rng.gen_range(p.workday_start_s..p.workday_end_s.max(p.workday_start_s + 1));
                let dur = 1 + exp.sample(&mut rng).round() as i64;
                sessions.insert_merged(&p.participant_id, start, start + dur);
            }
        }
    }

    let mut incentives = IncentiveSchedule::new();
    for (k, ph) in phases.iter().enumerate().filter(|(_, p)| p.kind.has_incentive()) {
        let dates: Vec<NaiveDate> = ph.days().filter(|d| is_workday(*d)).collect();
        if dates.is_empty() {
            continue;
        }
        for (d, a) in generate_incentive_schedule(config.incentive_seed.wrapping_add(k as u64), &dates)?.iter() {
            incentives.insert(d, a)?;
        }
    }

    let arx_path = match &config.arx {
        Some(coeffs) => Some(arx_reduction_path(config, coeffs, &clock, &phases, &days, &participants, &sessions, &incentives)?),
        None => None,
    };

    let streams: Vec<Vec<(SocketId, Vec<Sample>)>> = participants
        .par_iter()
        .enumerate()
        .map(|(i, p)| participant_streams(config, &clock, &phases, &days, p, i, arx_path.as_ref()))
        .collect();
    let mut readings = ReadingStore::new();
    for (p, socks) in participants.iter().zip(streams) {
        for (s, samples) in socks {
            *readings.stream_mut(&p.participant_id, &s) = samples;
        }
    }

    let truth = SyntheticTruth {
        reduction_by_phase: phases
            .iter()
            .map(|p| (p.label.clone(), config.reduction.for_kind(p.kind)))
            .collect(),
        participants,
        arx: config.arx.clone(),
    };
    let dataset = Dataset {
        site: config.site,
        clock,
        calendar,
        readings,
        sessions,
        incentives,
        comfort: Vec::new(),
    };
    Ok(SyntheticDataset { dataset, truth })
}

fn participant_streams(
    config: &SynthConfig,
    clock: &SiteClock,
    phases: &[Phase],
    days: &[NaiveDate],
    p: &ParticipantTruth,
    index: usize,
    arx_path: Option<&BTreeMap<(NaiveDate, u32), f64>>,
) -> Vec<(SocketId, Vec<Sample>)> {
    let mut rng = stream_rng(config.seed, STREAM_LOAD + index as u64);
    let n_active = config.sockets_per_participant - 1;
    let per_socket_active = if n_active > 0 { p.active_watts / n_active as f64 } else { 0.0 };
    let headroom = if config.arx.is_some() { config.arx_headroom_w } else { 0.0 };
    let active_noise = Normal::new(0.0, config.active_jitter_w).expect("finite sd");
    let idle_noise = Normal::new(0.0, config.idle_jitter_w).expect("finite sd");

    let mut out: Vec<(SocketId, Vec<Sample>)> = SOCKET_LABELS[..config.sockets_per_participant]
        .iter()
        .map(|l| (SocketId::from(*l), Vec::new()))
        .collect();
    for d in days {
        let phase = phases.iter().find(|ph| ph.contains(*d));
        let keep = 1.0 - phase.map_or(0.0, |ph| config.reduction.for_kind(ph.kind));
        let day_mult = (1.0 + config.daily_sd * rng.sample::<f64, _>(StandardNormal)).max(0.2) * keep;
        let workday = is_workday(*d);
        let (a, b) = clock.window(*d, 0, crate::data::DAY_S);
        let mut t = a;
        while t < b {
            let sod = t - a;
            let hour = (sod / HOUR_S) as u32 + 1;
            let arx_w = arx_path.and_then(|m| m.get(&(*d, hour))).copied().unwrap_or(0.0);
            let active = workday && sod >= p.workday_start_s && sod < p.workday_end_s;
            for (k, (_, samples)) in out.iter_mut().enumerate() {
                let watts = if k == 0 {
                    (p.always_on_watts + headroom) * day_mult - arx_w + idle_noise.sample(&mut rng)
                } else if active {
                    per_socket_active * day_mult + active_noise.sample(&mut rng)
                } else {
                    config.standby_watts * day_mult + idle_noise.sample(&mut rng)
                };
                samples.push(Sample { t, watts: watts.max(0.0) });
            }
            t += config.sample_period_s;
        }
    }
    out
}

/// Hourly ARX reduction path (W per participant) over experiment days.
#[allow(clippy::too_many_arguments)]
fn arx_reduction_path(
    config: &SynthConfig,
    coeffs: &ArxCoefficients,
    clock: &SiteClock,
    phases: &[Phase],
    days: &[NaiveDate],
    participants: &[ParticipantTruth],
    sessions: &SessionIndex,
    incentives: &IncentiveSchedule,
) -> Result<BTreeMap<(NaiveDate, u32), f64>> {
    let mut rng = stream_rng(config.seed, STREAM_ARX);
    let mut path = BTreeMap::new();
    for d in days {
        let Some(ph) = phases.iter().find(|ph| ph.contains(*d) && ph.kind != PhaseKind::Baseline) else {
            continue;
        };
        let inc = if ph.kind.has_incentive() {
            f64::from(incentives.amount_on(*d).unwrap_or(0))
        } else {
            0.0
        };
        let mut hist = vec![coeffs.fixed_point(); coeffs.beta.len()];
        let mut prev_st = 0.0;
        for h in 1..=24u32 {
            let y = coeffs.alpha
                + coeffs.beta.iter().zip(&hist).map(|(b, y)| b * y).sum::<f64>()
                + coeffs.gamma.unwrap_or(0.0) * prev_st
                + coeffs.delta.unwrap_or(0.0) * inc
                + coeffs.sigma_eps * rng.sample::<f64, _>(StandardNormal);
            path.insert((*d, h), y);
            hist.rotate_right(1);
            if let Some(first) = hist.first_mut() {
                *first = y;
            }
            let hi = i64::from(h);
            let (a, b) = clock.window(*d, HOUR_S * (hi - 1), HOUR_S * hi);
            prev_st = participants
                .iter()
                .map(|p| screentime_between(sessions, &p.participant_id, a, b) as f64)
                .sum::<f64>()
                / participants.len() as f64;
        }
    }
    Ok(path)
}

/// Settings for a directly simulated hourly ARX series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArxSeriesConfig {
    pub coeffs: ArxCoefficients,
    pub n_days: usize,
    pub hours_per_day: u32,
    /// Mean of the exponential per-hour screentime input (s).
    pub screentime_mean_s: f64,
    /// Probability that a day carries an incentive.
    pub incentive_day_prob: f64,
    pub seed: u64,
}

impl ArxSeriesConfig {
    pub fn new(coeffs: ArxCoefficients, n_days: usize, seed: u64) -> Self {
        Self {
            coeffs,
            n_days,
            hours_per_day: 24,
            screentime_mean_s: 120.0,
            incentive_day_prob: 0.5,
            seed,
        }
    }
}

/// Day series following the ARX recursion exactly (no missing hours).
///
/// Each day starts from the zero-input equilibrium.
pub fn simulate_arx_series(cfg: &ArxSeriesConfig) -> Result<Vec<DaySeries>> {
    let c = &cfg.coeffs;
    if c.beta.is_empty() || !(0.0..=1.0).contains(&cfg.incentive_day_prob) || cfg.screentime_mean_s <= 0.0 {
        return Err(Error::InvalidArgument("invalid ARX series configuration".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let exp = Exp::new(1.0 / cfg.screentime_mean_s).expect("positive rate");
    let day0 = NaiveDate::from_ymd_opt(2000, 1, 3).expect("date");
    let mut out = Vec::with_capacity(cfg.n_days);
    for i in 0..cfg.n_days {
        let inc = if rng.gen_bool(cfg.incentive_day_prob) {
            f64::from(*INCENTIVE_AMOUNTS.choose(&mut rng).expect("non-empty"))
        } else {
            0.0
        };
        let mut hist = vec![c.fixed_point(); c.beta.len()];
        let mut prev_st = exp.sample(&mut rng);
        let mut cells = Vec::with_capacity(cfg.hours_per_day as usize);
        for h in 1..=cfg.hours_per_day {
            let st = exp.sample(&mut rng);
            let y = c.alpha
                + c.beta.iter().zip(&hist).map(|(b, y)| b * y).sum::<f64>()
                + c.gamma.unwrap_or(0.0) * prev_st
                + c.delta.unwrap_or(0.0) * inc
                + c.sigma_eps * rng.sample::<f64, _>(StandardNormal);
            hist.rotate_right(1);
            hist[0] = y;
            // the cell's screentime feeds the next hour
            cells.push(HourCell {
                hour: h,
                target: Some(y),
                screentime_s: st,
                incentive_usd: inc,
                expt_pool_watts: None,
            });
            prev_st = st;
        }
        out.push(DaySeries {
            day: day0 + chrono::Duration::days(i as i64),
            cells,
        });
    }
    Ok(out)
}
