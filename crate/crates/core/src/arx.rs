//! ARX models of the hourly pool-mean consumption differential.
//!
//! The target at hour `h` of day `d` is the weekday-matched baseline pool
//! mean minus the experiment pool mean. Regressors are the lagged targets,
//! pool-mean screentime over the previous hour, and optionally the day's
//! incentive. Lags never reach across a day boundary.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::aggregation::{pool_hourly_mean, weekday_key};
use crate::data::{Dataset, Site, HOUR_S};
use crate::error::{Error, Result};
use crate::ols::{self, Design};
use crate::screentime::screentime_between;
use crate::stats::{mean, pearson};

/// Gaussian 97.5% point used for prediction intervals.
pub const Z_975: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum IncentiveTiming {
    /// Incentive of the target hour.
    #[default]
    #[serde(rename = "h")]
    SameHour,
    /// Incentive of the preceding hour.
    #[serde(rename = "h-1")]
    PreviousHour,
}

impl FromStr for IncentiveTiming {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "h" => Ok(Self::SameHour),
            "h-1" => Ok(Self::PreviousHour),
            other => Err(Error::InvalidArgument(format!("incentive timing `{other}`; expected h or h-1"))),
        }
    }
}

impl fmt::Display for IncentiveTiming {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::SameHour => "h",
            Self::PreviousHour => "h-1",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArxSpec {
    pub n_lags: usize,
    pub screentime: bool,
    pub incentive: bool,
    pub incentive_timing: IncentiveTiming,
}

impl Default for ArxSpec {
    fn default() -> Self {
        Self {
            n_lags: 1,
            screentime: true,
            incentive: false,
            incentive_timing: IncentiveTiming::SameHour,
        }
    }
}

impl ArxSpec {
    /// Screentime only at NASA; screentime and incentive at CMU.
    pub fn for_site(site: Site) -> Self {
        Self {
            incentive: site == Site::Cmu,
            ..Self::default()
        }
    }

    pub fn with_lags(self, n_lags: usize) -> Self {
        Self { n_lags, ..self }
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = vec!["intercept".to_owned()];
        names.extend((1..=self.n_lags).map(|i| format!("lag{i}")));
        if self.screentime {
            names.push("screentime".into());
        }
        if self.incentive {
            names.push("incentive".into());
        }
        names
    }
}

/// One hour of the pool-level series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HourCell {
    pub hour: u32,
    pub target: Option<f64>,
    pub screentime_s: f64,
    pub incentive_usd: f64,
    pub expt_pool_watts: Option<f64>,
}

/// Consecutive hours of one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaySeries {
    pub day: NaiveDate,
    pub cells: Vec<HourCell>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArxRow {
    pub day: NaiveDate,
    pub hour: u32,
    pub target: f64,
    /// `lags[i]` is the target `i + 1` hours earlier.
    pub lags: Vec<f64>,
    pub screentime_prev_s: f64,
    pub incentive_usd: f64,
    pub expt_pool_watts: f64,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArxDataset {
    pub site: Option<Site>,
    pub spec: ArxSpec,
    pub rows: Vec<ArxRow>,
}

impl ArxDataset {
    /// Builds rows from day series; the first `n_lags` hours of each run seed the lags.
    pub fn from_series(site: Option<Site>, series: &[DaySeries], spec: ArxSpec) -> Result<Self> {
        if spec.n_lags == 0 {
            return Err(Error::InvalidArgument("n_lags must be at least 1".into()));
        }
        let mut rows = Vec::new();
        for day in series {
            let cells = &day.cells;
            for i in spec.n_lags..cells.len() {
                let window = &cells[i - spec.n_lags..=i];
                let contiguous = window
                    .windows(2)
                    .all(|w| w[1].hour == w[0].hour + 1);
                if !contiguous || window.iter().any(|c| c.target.is_none()) {
                    continue;
                }
                let cur = &cells[i];
                let prev = &cells[i - 1];
                let incentive = match spec.incentive_timing {
                    IncentiveTiming::SameHour => cur.incentive_usd,
                    IncentiveTiming::PreviousHour => prev.incentive_usd,
                };
                rows.push(ArxRow {
                    day: day.day,
                    hour: cur.hour,
                    target: cur.target.expect("checked"),
                    lags: (1..=spec.n_lags)
                        .map(|k| cells[i - k].target.expect("checked"))
                        .collect(),
                    screentime_prev_s: prev.screentime_s,
                    incentive_usd: incentive,
                    expt_pool_watts: cur.expt_pool_watts.unwrap_or(f64::NAN),
                    split: Split::Train,
                });
            }
        }
        Ok(Self { site, spec, rows })
    }

    pub fn regressors(&self, row: &ArxRow) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.spec.n_lags + 3);
        x.push(1.0);
        x.extend_from_slice(&row.lags);
        if self.spec.screentime {
            x.push(row.screentime_prev_s);
        }
        if self.spec.incentive {
            x.push(row.incentive_usd);
        }
        x
    }

    pub fn rows_in(&self, split: Split) -> impl Iterator<Item = &ArxRow> {
        self.rows.iter().filter(move |r| r.split == split)
    }

    fn design_for<'a>(&self, rows: impl Iterator<Item = &'a ArxRow>) -> (Design, Vec<f64>) {
        let mut d = Design::new(self.spec.column_names());
        let mut y = Vec::new();
        for r in rows {
            d.push_row(&self.regressors(r));
            y.push(r.target);
        }
        (d, y)
    }
}

/// Hourly pool series for every experiment-phase day at the dataset's site.
pub fn hourly_series(ds: &Dataset) -> Result<Vec<DaySeries>> {
    let baseline = ds.baseline_phase()?;
    let participants = ds.participants();

    let mut sums: BTreeMap<(u32, u32), (f64, usize)> = BTreeMap::new();
    for day in baseline.days() {
        for h in 1..=24 {
            if let Some(m) = pool_hourly_mean(ds, baseline, day, h) {
                let e = sums.entry((weekday_key(day.weekday()), h)).or_default();
                e.0 += m;
                e.1 += 1;
            }
        }
    }
    let reference: BTreeMap<(u32, u32), f64> =
        sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect();

    let mut out = Vec::new();
    let mut any_target = false;
    for phase in ds.calendar.experiment_phases(ds.site) {
        for day in phase.days() {
            let incentive = f64::from(ds.incentive_on(day).unwrap_or(0));
            let cells = (1..=24)
                .map(|h| {
                    let expt = pool_hourly_mean(ds, phase, day, h);
                    let base = reference.get(&(weekday_key(day.weekday()), h)).copied();
                    let target = base.zip(expt).map(|(b, e)| b - e);
                    any_target |= target.is_some();
                    let hi = i64::from(h);
                    let (a, b) = ds.clock.window(day, HOUR_S * (hi - 1), HOUR_S * hi);
                    let st: Vec<f64> = participants
                        .iter()
                        .map(|p| screentime_between(&ds.sessions, p, a, b) as f64)
                        .collect();
                    HourCell {
                        hour: h,
                        target,
                        screentime_s: mean(&st).unwrap_or(0.0),
                        incentive_usd: incentive,
                        expt_pool_watts: expt,
                    }
                })
                .collect();
            out.push(DaySeries { day, cells });
        }
    }
    if !any_target {
        return Err(Error::NoWeekdayOverlap);
    }
    Ok(out)
}

pub fn build_arx_dataset(ds: &Dataset, spec: ArxSpec) -> Result<ArxDataset> {
    ArxDataset::from_series(Some(ds.site), &hourly_series(ds)?, spec)
}

/// Chronological split: the earliest `frac` of rows train, the rest test.
pub fn split_train_test(mut dataset: ArxDataset, frac: f64) -> Result<ArxDataset> {
    if !(frac > 0.0 && frac < 1.0) {
        return Err(Error::InvalidArgument(format!("split fraction {frac} not in (0, 1)")));
    }
    let n = dataset.rows.len();
    let n_train = (frac * n as f64).round() as usize;
    if n.saturating_sub(n_train) < 2 || n_train == 0 {
        return Err(Error::InsufficientSample(format!(
            "{n} rows leave fewer than 2 test rows at fraction {frac}"
        )));
    }
    dataset.rows.sort_by_key(|r| (r.day, r.hour));
    for (i, r) in dataset.rows.iter_mut().enumerate() {
        r.split = if i < n_train { Split::Train } else { Split::Test };
    }
    Ok(dataset)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArxCoefficients {
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub gamma: Option<f64>,
    pub delta: Option<f64>,
    pub sigma_eps: f64,
}

impl ArxCoefficients {
    /// Point prediction and 95% interval `point ± 1.96 σ`.
    pub fn predict(&self, lags: &[f64], screentime_prev_s: f64, incentive_usd: f64) -> Prediction {
        let mut point = self.alpha;
        point += self.beta.iter().zip(lags).map(|(b, x)| b * x).sum::<f64>();
        if let Some(g) = self.gamma {
            point += g * screentime_prev_s;
        }
        if let Some(d) = self.delta {
            point += d * incentive_usd;
        }
        let half = Z_975 * self.sigma_eps;
        Prediction {
            point,
            interval95: [point - half, point + half],
        }
    }

    /// Stationary level with zero exogenous input, `α / (1 − Σβ)`.
    pub fn fixed_point(&self) -> f64 {
        self.alpha / (1.0 - self.beta.iter().sum::<f64>())
    }

    fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.alpha];
        v.extend(&self.beta);
        v.extend(self.gamma);
        v.extend(self.delta);
        v
    }
}

/// ARX(1) with screentime, fitted to the NASA experiment.
pub fn nasa_table_coefficients() -> ArxCoefficients {
    ArxCoefficients {
        alpha: -0.0298,
        beta: vec![0.8042],
        gamma: Some(0.0019),
        delta: None,
        sigma_eps: 3.5199,
    }
}

/// ARX(1) with screentime and incentive, fitted to the CMU experiment.
pub fn cmu_table_coefficients() -> ArxCoefficients {
    ArxCoefficients {
        alpha: 2.501,
        beta: vec![0.7673],
        gamma: Some(0.0046),
        delta: Some(-0.008),
        sigma_eps: 3.9634,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub point: f64,
    pub interval95: [f64; 2],
}

pub fn predict(
    coeffs: &ArxCoefficients,
    prev_diff: f64,
    screentime_prev_s: f64,
    incentive_usd: f64,
) -> Prediction {
    coeffs.predict(&[prev_diff], screentime_prev_s, incentive_usd)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArxFit {
    pub spec: ArxSpec,
    pub coefficients: ArxCoefficients,
    pub names: Vec<String>,
    pub std_errors: Vec<f64>,
    /// Training residuals in row order.
    pub residuals: Vec<f64>,
    pub train_rows: usize,
}

fn coefficients_from(spec: &ArxSpec, beta: &[f64], sigma: f64) -> ArxCoefficients {
    let mut it = beta.iter().copied();
    let alpha = it.next().expect("intercept");
    let lags = (&mut it).take(spec.n_lags).collect();
    let gamma = if spec.screentime { it.next() } else { None };
    let delta = if spec.incentive { it.next() } else { None };
    ArxCoefficients {
        alpha,
        beta: lags,
        gamma,
        delta,
        sigma_eps: sigma,
    }
}

/// OLS on the dataset's training rows.
pub fn fit_ols(dataset: &ArxDataset) -> Result<ArxFit> {
    let (design, y) = dataset.design_for(dataset.rows_in(Split::Train));
    let fit = ols::fit(&design, &y)?;
    Ok(ArxFit {
        spec: dataset.spec,
        coefficients: coefficients_from(&dataset.spec, &fit.coefficients, fit.sigma),
        names: fit.names,
        std_errors: fit.std_errors,
        train_rows: y.len(),
        residuals: fit.residuals,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub n: usize,
    pub rmse: f64,
    pub rms_accuracy_pct: f64,
    /// Mean lower and upper 95% prediction bounds over the rows.
    pub mean_interval95: [f64; 2],
}

/// One-step-ahead evaluation on observed lags.
///
/// Accuracy is `100 × (1 − rmse / mean|experiment pool power|)`.
pub fn evaluate<'a>(
    coeffs: &ArxCoefficients,
    rows: impl IntoIterator<Item = &'a ArxRow>,
) -> Result<Evaluation> {
    let (mut se, mut lo, mut hi, mut abs_power, mut n) = (0.0, 0.0, 0.0, 0.0, 0usize);
    for r in rows {
        let p = coeffs.predict(&r.lags, r.screentime_prev_s, r.incentive_usd);
        se += (r.target - p.point).powi(2);
        lo += p.interval95[0];
        hi += p.interval95[1];
        abs_power += r.expt_pool_watts.abs();
        n += 1;
    }
    if n == 0 {
        return Err(Error::InsufficientSample("empty test set".into()));
    }
    let nf = n as f64;
    let rmse = (se / nf).sqrt();
    Ok(Evaluation {
        n,
        rmse,
        rms_accuracy_pct: 100.0 * (1.0 - rmse / (abs_power / nf)),
        mean_interval95: [lo / nf, hi / nf],
    })
}

/// Lag-1 autocorrelation of residuals between consecutive hours of the same day.
pub fn residual_autocorr(rows: &[&ArxRow], residuals: &[f64]) -> Option<f64> {
    let mut cur = Vec::new();
    let mut prev = Vec::new();
    for i in 1..rows.len() {
        if rows[i].day == rows[i - 1].day && rows[i].hour == rows[i - 1].hour + 1 {
            cur.push(residuals[i]);
            prev.push(residuals[i - 1]);
        }
    }
    pearson(&cur, &prev)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagProfileRow {
    pub n_lags: usize,
    pub lag1_autocorr: f64,
    pub rmse: f64,
    pub rows: usize,
}

/// Refits with 1..=max_lags lagged targets and reports residual autocorrelation.
///
/// Lag counts that leave too few rows end the profile early with a warning.
pub fn residual_lag_profile(
    site: Option<Site>,
    series: &[DaySeries],
    base: ArxSpec,
    max_lags: usize,
) -> Result<Vec<LagProfileRow>> {
    if max_lags == 0 {
        return Err(Error::InvalidArgument("max_lags must be at least 1".into()));
    }
    let mut out = Vec::new();
    for n_lags in 1..=max_lags {
        let ds = ArxDataset::from_series(site, series, base.with_lags(n_lags))?;
        let fit = match fit_ols(&ds) {
            Ok(f) => f,
            Err(Error::InsufficientSample(msg)) => {
                log::warn!("residual lag profile truncated at {} lags: {msg}", n_lags - 1);
                break;
            }
            Err(e) => return Err(e),
        };
        let rows: Vec<&ArxRow> = ds.rows_in(Split::Train).collect();
        let rmse = (fit.residuals.iter().map(|e| e * e).sum::<f64>() / fit.residuals.len() as f64).sqrt();
        out.push(LagProfileRow {
            n_lags,
            lag1_autocorr: residual_autocorr(&rows, &fit.residuals).unwrap_or(f64::NAN),
            rmse,
            rows: fit.train_rows,
        });
    }
    Ok(out)
}

/// Residuals of `coeffs` on arbitrary rows (used by diagnostics and plots).
pub fn residuals<'a>(coeffs: &ArxCoefficients, rows: impl IntoIterator<Item = &'a ArxRow>) -> Vec<f64> {
    rows.into_iter()
        .map(|r| r.target - coeffs.predict(&r.lags, r.screentime_prev_s, r.incentive_usd).point)
        .collect()
}

impl ArxFit {
    pub fn coefficient_vector(&self) -> Vec<f64> {
        self.coefficients.to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cells(targets: &[Option<f64>]) -> Vec<HourCell> {
        targets
            .iter()
            .enumerate()
            .map(|(i, t)| HourCell {
                hour: i as u32 + 1,
                target: *t,
                screentime_s: 10.0 * i as f64,
                incentive_usd: 20.0,
                expt_pool_watts: Some(50.0),
            })
            .collect()
    }

    fn day(n: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2016, 10, n).unwrap()
    }

    #[test]
    fn one_lag_gives_23_rows_per_day() {
        let series = vec![
            DaySeries { day: day(18), cells: cells(&[Some(1.0); 24]) },
            DaySeries { day: day(19), cells: cells(&[Some(1.0); 24]) },
        ];
        let ds = ArxDataset::from_series(None, &series, ArxSpec::default()).unwrap();
        assert_eq!(ds.rows.len(), 46);
        assert!(ds.rows.iter().all(|r| r.hour >= 2));
    }

    #[test]
    fn gaps_restart_the_lag_chain() {
        let mut t = vec![Some(1.0); 24];
        t[5] = None;
        let series = vec![DaySeries { day: day(18), cells: cells(&t) }];
        let ds = ArxDataset::from_series(None, &series, ArxSpec::default().with_lags(2)).unwrap();
        // hours 3..=5 then 9..=24
        assert_eq!(ds.rows.len(), 3 + 16);
        assert!(ds.rows.iter().all(|r| !(6..=8).contains(&r.hour)));
    }

    #[test]
    fn hand_built_rows() {
        let series = vec![DaySeries { day: day(18), cells: cells(&[Some(4.0), Some(6.0), Some(5.0)]) }];
        let spec = ArxSpec { incentive: true, ..ArxSpec::default() };
        let ds = ArxDataset::from_series(None, &series, spec).unwrap();
        assert_eq!(ds.rows.len(), 2);
        let r = &ds.rows[1];
        assert_eq!((r.hour, r.target, r.lags.clone()), (3, 5.0, vec![6.0]));
        assert_eq!(r.screentime_prev_s, 10.0);
        assert_eq!(ds.regressors(r), vec![1.0, 6.0, 10.0, 20.0]);
    }

    #[test]
    fn table_predictions() {
        let p = predict(&nasa_table_coefficients(), 0.0, 0.0, 0.0);
        assert_abs_diff_eq!(p.point, -0.0298, epsilon = 1e-12);
        assert_abs_diff_eq!(p.interval95[1] - p.point, 6.899, epsilon = 1e-3);
        let p = predict(&cmu_table_coefficients(), 10.0, 600.0, 20.0);
        assert_abs_diff_eq!(p.point, 2.501 + 7.673 + 2.76 - 0.16, epsilon = 1e-12);
        assert_abs_diff_eq!(p.point, 12.774, epsilon = 1e-9);
    }

    fn rows(n: usize) -> ArxDataset {
        let series: Vec<DaySeries> = (0..n)
            .map(|i| DaySeries {
                day: day(1) + chrono::Duration::days(i as i64),
                cells: cells(&[Some(1.0), Some(2.0)]),
            })
            .collect();
        ArxDataset::from_series(None, &series, ArxSpec::default()).unwrap()
    }

    #[test]
    fn chronological_split() {
        let s = split_train_test(rows(10), 0.7).unwrap();
        assert_eq!(s.rows_in(Split::Train).count(), 7);
        assert_eq!(s.rows_in(Split::Test).count(), 3);
        let s = split_train_test(rows(100), 0.7).unwrap();
        let test: Vec<usize> = s.rows.iter().enumerate().filter(|(_, r)| r.split == Split::Test).map(|(i, _)| i).collect();
        assert_eq!(test, (70..100).collect::<Vec<_>>());
        let again = split_train_test(s.clone(), 0.7).unwrap();
        assert_eq!(again, s);
        assert!(split_train_test(rows(3), 0.7).is_err());
        assert!(split_train_test(rows(10), 1.0).is_err());
    }

    #[test]
    fn evaluation_arithmetic() {
        let coeffs = ArxCoefficients { alpha: 0.0, beta: vec![0.0], gamma: None, delta: None, sigma_eps: 1.0 };
        let mut ds = rows(2);
        ds.rows[0].target = 3.0;
        ds.rows[1].target = -4.0;
        let e = evaluate(&coeffs, &ds.rows).unwrap();
        assert_abs_diff_eq!(e.rmse, 3.5355, epsilon = 1e-4);
        assert_abs_diff_eq!(e.rms_accuracy_pct, 100.0 * (1.0 - e.rmse / 50.0), epsilon = 1e-12);
        assert_abs_diff_eq!(e.mean_interval95[0], -1.96, epsilon = 1e-12);
        assert!(evaluate(&coeffs, &[]).is_err());

        let perfect = ArxCoefficients { alpha: 2.0, ..coeffs };
        let e = evaluate(&perfect, &rows(5).rows).unwrap();
        assert_eq!(e.rmse, 0.0);
        assert_eq!(e.rms_accuracy_pct, 100.0);
    }

    #[test]
    fn incentive_timing_parses() {
        assert_eq!("h-1".parse::<IncentiveTiming>().unwrap(), IncentiveTiming::PreviousHour);
        assert!("h+1".parse::<IncentiveTiming>().is_err());
    }
}
