//! Plugload-integrated building demand.
//!
//! Non-plugload demand is cyclostationary with a 24 h period. The plugload
//! share `f_p` of the base load is reduced by `η_k = R_k / 100`, where the
//! reduction process `R_k` (percent) follows
//!
//! ```text
//! R_k = α + β R_{k−1} + γ xa_{k−1} + δ xi_k + ξ_k,   ξ_k ~ N(0, σ_ξ)
//! ```
//!
//! with screentime `xa` (s) and incentive `xi` (USD) as inputs.

use std::io::Read;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::quantile_sorted;

/// Epoch spacing in seconds.
pub const EPOCH_S: i64 = 3600;
/// Non-plugload period in seconds.
pub const PERIOD_S: i64 = 24 * 3600;
/// Non-plugload period in epochs.
pub const PERIOD_EPOCHS: usize = 24;
/// Plugload fraction used for the demonstration scenarios.
pub const DEFAULT_PLUGLOAD_FRACTION: f64 = 0.5;

/// Per-hour-of-day load statistics. Index 0 is hour 1 (00:00–01:00).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CyclostationaryProfile {
    pub mean_kw: Vec<f64>,
    pub std_kw: Vec<f64>,
    pub period_s: i64,
}

impl CyclostationaryProfile {
    pub fn new(mean_kw: Vec<f64>, std_kw: Vec<f64>) -> Result<Self> {
        if mean_kw.len() != PERIOD_EPOCHS || std_kw.len() != PERIOD_EPOCHS {
            return Err(Error::InvalidArgument("profile needs exactly 24 hourly entries".into()));
        }
        if mean_kw.iter().chain(&std_kw).any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument("profile entries must be finite and non-negative".into()));
        }
        Ok(Self {
            mean_kw,
            std_kw,
            period_s: PERIOD_S,
        })
    }

    /// An illustrative medium-office weekday shape (kW).
    pub fn medium_office() -> Self {
        let mean = vec![
            112.0, 110.0, 109.0, 109.0, 112.0, 128.0, 171.0, 226.0, 262.0, 275.0, 281.0, 284.0,
            280.0, 283.0, 281.0, 276.0, 266.0, 238.0, 196.0, 161.0, 140.0, 128.0, 120.0, 115.0,
        ];
        let std = mean.iter().map(|m| 0.06 * m).collect();
        Self::new(mean, std).expect("static profile is valid")
    }

    pub fn mean_at(&self, hour_index: usize) -> f64 {
        self.mean_kw[hour_index % PERIOD_EPOCHS]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HourlyLoad {
    pub date: NaiveDate,
    /// 1..=24
    pub hour: u32,
    pub kw: f64,
}

/// Per-hour mean and sample std (n−1) across complete days.
///
/// Days without exactly one value for each of the 24 hours are dropped;
/// the second element lists them.
pub fn ingest_profile(rows: &[HourlyLoad]) -> Result<(CyclostationaryProfile, Vec<NaiveDate>)> {
    use std::collections::BTreeMap;
    let mut days: BTreeMap<NaiveDate, BTreeMap<u32, f64>> = BTreeMap::new();
    let mut broken = std::collections::BTreeSet::new();
    for r in rows {
        if !(1..=24).contains(&r.hour) || !r.kw.is_finite() {
            broken.insert(r.date);
            continue;
        }
        if days.entry(r.date).or_default().insert(r.hour, r.kw).is_some() {
            broken.insert(r.date);
        }
    }
    let mut dropped = Vec::new();
    let complete: Vec<&BTreeMap<u32, f64>> = days
        .iter()
        .filter_map(|(d, hours)| {
            if hours.len() == 24 && !broken.contains(d) {
                Some(hours)
            } else {
                log::warn!("dropping partial load day {d} ({} hours)", hours.len());
                dropped.push(*d);
                None
            }
        })
        .collect();
    if complete.is_empty() {
        return Err(Error::InsufficientSample("no complete day of hourly load".into()));
    }
    let n = complete.len() as f64;
    let mut mean = vec![0.0; 24];
    let mut std = vec![0.0; 24];
    for h in 0..24 {
        let vals: Vec<f64> = complete.iter().map(|d| d[&(h as u32 + 1)]).collect();
        let m = vals.iter().sum::<f64>() / n;
        mean[h] = m;
        if vals.len() > 1 {
            std[h] = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        }
    }
    Ok((CyclostationaryProfile::new(mean, std)?, dropped))
}

/// Reads `date,hour,kw` rows (header required).
pub fn read_hourly_load<R: Read>(reader: R) -> Result<Vec<HourlyLoad>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<HourlyLoad>().enumerate() {
        out.push(rec.map_err(|e| Error::Csv {
            path: "hourly load".into(),
            line: i as u64 + 2,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReductionCoefficients {
    pub alpha_l: f64,
    pub beta_l: f64,
    pub gamma_l: f64,
    pub delta_l: f64,
    pub sigma_xi: f64,
}

impl ReductionCoefficients {
    /// Estimates for the CMU reduction process.
    pub fn cmu_table() -> Self {
        Self {
            alpha_l: -0.06534,
            beta_l: 0.8078,
            gamma_l: 0.005597,
            delta_l: 0.07303,
            sigma_xi: 1.2779,
        }
    }

    /// `α / (1 − β)`, the zero-input equilibrium.
    pub fn fixed_point(&self) -> f64 {
        self.alpha_l / (1.0 - self.beta_l)
    }

    fn step(&self, prev: f64, input: &EpochInput, noise: f64) -> f64 {
        self.alpha_l
            + self.beta_l * prev
            + self.gamma_l * input.screentime_prev_s
            + self.delta_l * input.incentive_usd
            + noise
    }
}

/// Inputs of one decision epoch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochInput {
    /// Screentime during the previous epoch (s).
    pub screentime_prev_s: f64,
    /// Incentive in effect at this epoch (USD).
    pub incentive_usd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Noise {
    Zero,
    Seeded(u64),
}

fn check_inputs(coeffs: &ReductionCoefficients, r0: f64, inputs: &[EpochInput]) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    if !r0.is_finite() {
        return Err(Error::NonFinite(0));
    }
    if let Some(k) = inputs
        .iter()
        .position(|i| !i.screentime_prev_s.is_finite() || !i.incentive_usd.is_finite())
    {
        return Err(Error::NonFinite(k));
    }
    if coeffs.beta_l.abs() >= 1.0 {
        log::warn!("|beta_l| = {} >= 1: reduction process is not stable", coeffs.beta_l.abs());
    }
    Ok(())
}

fn run_reduction<R: Rng>(
    coeffs: &ReductionCoefficients,
    r0: f64,
    inputs: &[EpochInput],
    mut rng: Option<&mut R>,
) -> Vec<f64> {
    let mut prev = r0;
    inputs
        .iter()
        .map(|input| {
            let xi = match rng.as_deref_mut() {
                Some(r) if coeffs.sigma_xi > 0.0 => coeffs.sigma_xi * r.sample::<f64, _>(StandardNormal),
                _ => 0.0,
            };
            prev = coeffs.step(prev, input, xi);
            prev
        })
        .collect()
}

/// `R_1..R_H` from `R_0 = r0`; one output per input epoch.
pub fn simulate_reduction(
    coeffs: &ReductionCoefficients,
    r0: f64,
    inputs: &[EpochInput],
    noise: Noise,
) -> Result<Vec<f64>> {
    check_inputs(coeffs, r0, inputs)?;
    Ok(match noise {
        Noise::Zero => run_reduction::<ChaCha8Rng>(coeffs, r0, inputs, None),
        Noise::Seeded(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            run_reduction(coeffs, r0, inputs, Some(&mut rng))
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandEpoch {
    pub k: usize,
    pub t_s: i64,
    /// 0-based hour of day.
    pub hour_index: usize,
    pub l_np_kw: f64,
    pub l_p_kw: f64,
    pub l_total_kw: f64,
    pub r_pct: f64,
    pub screentime_s: f64,
    pub incentive_usd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandPath {
    pub epochs: Vec<DemandEpoch>,
}

/// Where the simulated horizon sits in time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Horizon {
    pub start_s: i64,
    /// 0-based hour of day of the first epoch.
    pub start_hour_index: usize,
}

/// Composes total demand from the base load and a reduction path.
///
/// `base_kw`, when given, holds the base load for epochs `−24..H` (length
/// `H + 24`); otherwise the profile means are used.
pub fn integrate_demand(
    profile: &CyclostationaryProfile,
    f_p: f64,
    r_path: &[f64],
    inputs: &[EpochInput],
    base_kw: Option<&[f64]>,
    horizon: Horizon,
) -> Result<DemandPath> {
    if !(f_p > 0.0 && f_p < 1.0) {
        return Err(Error::InvalidArgument(format!("plugload fraction {f_p} not in (0, 1)")));
    }
    if r_path.len() != inputs.len() {
        return Err(Error::InvalidArgument("reduction path and inputs differ in length".into()));
    }
    let h = r_path.len();
    if let Some(b) = base_kw {
        if b.len() != h + PERIOD_EPOCHS {
            return Err(Error::InvalidArgument(format!(
                "base series needs {} values, got {}",
                h + PERIOD_EPOCHS,
                b.len()
            )));
        }
    }
    let base = |k: i64| -> f64 {
        match base_kw {
            Some(b) => b[(k + PERIOD_EPOCHS as i64) as usize],
            None => profile.mean_at(
                (horizon.start_hour_index as i64 + k).rem_euclid(PERIOD_EPOCHS as i64) as usize,
            ),
        }
    };
    let epochs = (0..h)
        .map(|k| {
            let ki = k as i64;
            let l_np = (1.0 - f_p) * base(ki - PERIOD_EPOCHS as i64);
            let l_pb = f_p * base(ki);
            let eta = (r_path[k] / 100.0).min(1.0);
            let l_p = (1.0 - eta) * l_pb;
            DemandEpoch {
                k,
                t_s: horizon.start_s + ki * EPOCH_S,
                hour_index: (horizon.start_hour_index + k) % PERIOD_EPOCHS,
                l_np_kw: l_np,
                l_p_kw: l_p,
                l_total_kw: l_np + l_p,
                r_pct: r_path[k],
                screentime_s: inputs[k].screentime_prev_s,
                incentive_usd: inputs[k].incentive_usd,
            }
        })
        .collect();
    Ok(DemandPath { epochs })
}

/// A what-if scenario over the controllable demand model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutScenario {
    pub coeffs: ReductionCoefficients,
    pub profile: CyclostationaryProfile,
    pub f_p: f64,
    pub r0: f64,
    pub horizon: Horizon,
    pub inputs: Vec<EpochInput>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub mean: f64,
    pub p05: f64,
    pub p95: f64,
}

impl Band {
    fn of(values: &mut [f64]) -> Band {
        values.sort_by(f64::total_cmp);
        Band {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            p05: quantile_sorted(values, 0.05).expect("non-empty"),
            p95: quantile_sorted(values, 0.95).expect("non-empty"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochBand {
    pub k: usize,
    pub l_total_kw: Band,
    pub l_p_kw: Band,
    pub r_pct: Band,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutSummary {
    pub n_monte_carlo: usize,
    pub seed: u64,
    pub epochs: Vec<EpochBand>,
    /// Energy per simulated day (kWh), one band per complete day.
    pub daily_kwh: Vec<Band>,
    pub peak_kw: Band,
}

/// Monte Carlo over ξ draws; draw `i` uses ChaCha stream `i` of `seed`.
pub fn policy_rollout(scenario: &RolloutScenario, n_monte_carlo: usize, seed: u64) -> Result<RolloutSummary> {
    if n_monte_carlo < 1 {
        return Err(Error::InvalidArgument("n_monte_carlo must be at least 1".into()));
    }
    check_inputs(&scenario.coeffs, scenario.r0, &scenario.inputs)?;
    let paths: Vec<DemandPath> = (0..n_monte_carlo)
        .into_par_iter()
        .map(|draw| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(draw as u64);
            let r = run_reduction(&scenario.coeffs, scenario.r0, &scenario.inputs, Some(&mut rng));
            integrate_demand(
                &scenario.profile,
                scenario.f_p,
                &r,
                &scenario.inputs,
                None,
                scenario.horizon,
            )
        })
        .collect::<Result<_>>()?;

    let h = scenario.inputs.len();
    let column = |f: &dyn Fn(&DemandEpoch) -> f64, k: usize| -> Vec<f64> {
        paths.iter().map(|p| f(&p.epochs[k])).collect()
    };
    let epochs = (0..h)
        .map(|k| EpochBand {
            k,
            l_total_kw: Band::of(&mut column(&|e| e.l_total_kw, k)),
            l_p_kw: Band::of(&mut column(&|e| e.l_p_kw, k)),
            r_pct: Band::of(&mut column(&|e| e.r_pct, k)),
        })
        .collect();
    let n_days = h / PERIOD_EPOCHS;
    let daily_kwh = (0..n_days)
        .map(|d| {
            let mut v: Vec<f64> = paths
                .iter()
                .map(|p| {
                    p.epochs[d * PERIOD_EPOCHS..(d + 1) * PERIOD_EPOCHS]
                        .iter()
                        .map(|e| e.l_total_kw * EPOCH_S as f64 / 3600.0)
                        .sum()
                })
                .collect();
            Band::of(&mut v)
        })
        .collect();
    let mut peaks: Vec<f64> = paths
        .iter()
        .map(|p| p.epochs.iter().map(|e| e.l_total_kw).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    Ok(RolloutSummary {
        n_monte_carlo,
        seed,
        epochs,
        daily_kwh,
        peak_kw: Band::of(&mut peaks),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn flat_day_profile() {
        let d = NaiveDate::from_ymd_opt(2016, 1, 4).unwrap();
        let rows: Vec<HourlyLoad> = (1..=24).map(|h| HourlyLoad { date: d, hour: h, kw: 100.0 }).collect();
        let (p, dropped) = ingest_profile(&rows).unwrap();
        assert!(dropped.is_empty());
        assert!(p.mean_kw.iter().all(|m| *m == 100.0));
        assert!(p.std_kw.iter().all(|s| *s == 0.0));
    }

    #[test]
    fn two_day_std_uses_n_minus_one() {
        let d1 = NaiveDate::from_ymd_opt(2016, 1, 4).unwrap();
        let d2 = d1.succ_opt().unwrap();
        let mut rows = Vec::new();
        for (d, k) in [(d1, 80.0), (d2, 120.0)] {
            rows.extend((1..=24).map(|h| HourlyLoad { date: d, hour: h, kw: if h == 9 { k } else { 50.0 } }));
        }
        let (p, _) = ingest_profile(&rows).unwrap();
        assert_abs_diff_eq!(p.mean_kw[8], 100.0);
        assert_abs_diff_eq!(p.std_kw[8], 28.284, epsilon = 1e-3);
    }

    #[test]
    fn partial_day_dropped() {
        let d1 = NaiveDate::from_ymd_opt(2016, 1, 4).unwrap();
        let d2 = d1.succ_opt().unwrap();
        let mut rows: Vec<HourlyLoad> = (1..=24).map(|h| HourlyLoad { date: d1, hour: h, kw: 10.0 }).collect();
        rows.extend((1..=23).map(|h| HourlyLoad { date: d2, hour: h, kw: 99.0 }));
        let (p, dropped) = ingest_profile(&rows).unwrap();
        assert_eq!(dropped, vec![d2]);
        assert_eq!(p.mean_kw[0], 10.0);
        assert!(ingest_profile(&rows[24..]).is_err());
    }

    #[test]
    fn fixed_point_of_table_coefficients() {
        let c = ReductionCoefficients::cmu_table();
        let r = simulate_reduction(&c, 0.0, &[EpochInput::default(); 200], Noise::Zero).unwrap();
        // geometric series: R_k = α (1 − β^k) / (1 − β)
        let oracle = |k: i32| c.alpha_l * (1.0 - c.beta_l.powi(k)) / (1.0 - c.beta_l);
        for k in [1, 2, 10, 50] {
            assert_abs_diff_eq!(r[k as usize - 1], oracle(k), epsilon = 1e-14);
        }
        assert_abs_diff_eq!(r[199], -0.06534 / (1.0 - 0.8078), epsilon = 1e-12);
        assert_abs_diff_eq!(c.fixed_point(), -0.339_958, epsilon = 1e-6);
    }

    #[test]
    fn memoryless_and_incentive_fixed_point() {
        let c = ReductionCoefficients { beta_l: 0.0, sigma_xi: 0.0, ..ReductionCoefficients::cmu_table() };
        let input = EpochInput { screentime_prev_s: 120.0, incentive_usd: 15.0 };
        let r = simulate_reduction(&c, 7.0, &[input; 3], Noise::Zero).unwrap();
        let expect = c.alpha_l + c.gamma_l * 120.0 + c.delta_l * 15.0;
        assert!(r.iter().all(|x| (x - expect).abs() < 1e-15));

        let c = ReductionCoefficients::cmu_table();
        let ten = EpochInput { screentime_prev_s: 0.0, incentive_usd: 10.0 };
        let r = simulate_reduction(&c, 0.0, &[ten; 300], Noise::Zero).unwrap();
        assert_abs_diff_eq!(r[299], (c.alpha_l + 10.0 * c.delta_l) / (1.0 - c.beta_l), epsilon = 1e-12);
    }

    #[test]
    fn non_finite_input_rejected() {
        let c = ReductionCoefficients::cmu_table();
        let mut inputs = vec![EpochInput::default(); 4];
        inputs[2].incentive_usd = f64::NAN;
        assert!(matches!(simulate_reduction(&c, 0.0, &inputs, Noise::Zero), Err(Error::NonFinite(2))));
        assert!(simulate_reduction(&c, 0.0, &[], Noise::Zero).is_err());
    }

    fn flat(kw: f64) -> CyclostationaryProfile {
        CyclostationaryProfile::new(vec![kw; 24], vec![0.0; 24]).unwrap()
    }

    #[test]
    fn integration_cases() {
        let inputs = vec![EpochInput::default(); 48];
        let p = integrate_demand(&flat(100.0), 0.5, &[10.0; 48], &inputs, None, Horizon::default()).unwrap();
        assert!(p.epochs.iter().all(|e| (e.l_total_kw - 95.0).abs() < 1e-12));
        let p = integrate_demand(&flat(100.0), 0.5, &[100.0; 48], &inputs, None, Horizon::default()).unwrap();
        assert!(p.epochs.iter().all(|e| e.l_p_kw == 0.0 && e.l_total_kw == e.l_np_kw));
        let office = CyclostationaryProfile::medium_office();
        let p = integrate_demand(&office, 0.3, &[0.0; 48], &inputs, None, Horizon::default()).unwrap();
        for e in &p.epochs {
            assert_abs_diff_eq!(e.l_total_kw, office.mean_at(e.hour_index), epsilon = 1e-9);
        }
        assert!(integrate_demand(&office, 1.0, &[0.0; 48], &inputs, None, Horizon::default()).is_err());
        assert!(integrate_demand(&office, 0.0, &[0.0; 48], &inputs, None, Horizon::default()).is_err());
    }

    #[test]
    fn explicit_base_series_uses_previous_period() {
        let inputs = vec![EpochInput::default(); 2];
        let mut base = vec![10.0; 24];
        base.extend([40.0, 40.0]);
        let p = integrate_demand(&flat(1.0), 0.5, &[0.0, 0.0], &inputs, Some(&base), Horizon::default()).unwrap();
        assert_abs_diff_eq!(p.epochs[0].l_np_kw, 5.0);
        assert_abs_diff_eq!(p.epochs[0].l_p_kw, 20.0);
    }

    fn scenario(sigma: f64, beta: f64) -> RolloutScenario {
        RolloutScenario {
            coeffs: ReductionCoefficients { sigma_xi: sigma, beta_l: beta, ..ReductionCoefficients::cmu_table() },
            profile: CyclostationaryProfile::medium_office(),
            f_p: 0.5,
            r0: 0.0,
            horizon: Horizon::default(),
            inputs: vec![EpochInput { screentime_prev_s: 300.0, incentive_usd: 20.0 }; 48],
        }
    }

    #[test]
    fn zero_noise_bands_collapse() {
        let s = policy_rollout(&scenario(0.0, 0.8078), 16, 3).unwrap();
        let det = simulate_reduction(&scenario(0.0, 0.8078).coeffs, 0.0, &scenario(0.0, 0.8).inputs, Noise::Zero).unwrap();
        for (b, r) in s.epochs.iter().zip(&det) {
            assert_eq!(b.r_pct.p05, b.r_pct.p95);
            assert_abs_diff_eq!(b.r_pct.mean, *r, epsilon = 1e-12);
        }
        assert!(policy_rollout(&scenario(0.0, 0.8), 0, 3).is_err());
    }

    #[test]
    fn band_halfwidth_scales_with_sigma_when_memoryless() {
        let a = policy_rollout(&scenario(1.0, 0.0), 400, 11).unwrap();
        let b = policy_rollout(&scenario(2.0, 0.0), 400, 11).unwrap();
        for (x, y) in a.epochs.iter().zip(&b.epochs) {
            let hx = x.l_total_kw.p95 - x.l_total_kw.p05;
            let hy = y.l_total_kw.p95 - y.l_total_kw.p05;
            assert_abs_diff_eq!(hy / hx, 2.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn rollout_is_deterministic() {
        let a = policy_rollout(&scenario(1.2779, 0.8078), 50, 7).unwrap();
        let b = policy_rollout(&scenario(1.2779, 0.8078), 50, 7).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = policy_rollout(&scenario(1.2779, 0.8078), 50, 8).unwrap();
        assert_ne!(a, c);
        assert_eq!(a.daily_kwh.len(), 2);
    }
}
