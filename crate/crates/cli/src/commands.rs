use std::fs;
use std::io::Write as _;
use std::path::Path;

use anyhow::Context;
use chrono::{NaiveDate, NaiveDateTime, Timelike};
use plugwatt_core::arx::{
    evaluate, fit_ols, hourly_series, residual_lag_profile, split_train_test, ArxDataset, ArxSpec, IncentiveTiming,
    Split,
};
use plugwatt_core::demand::{
    ingest_profile, integrate_demand, policy_rollout, read_hourly_load, simulate_reduction, CyclostationaryProfile,
    EpochInput, Horizon, Noise, ReductionCoefficients, RolloutScenario,
};
use plugwatt_core::inference::{build_differential_sample, paired_t_test, paper_consistency_report, summarize_phase};
use plugwatt_core::io::{load_dataset, load_raw, save_dataset, LoadedDataset, Manifest, MANIFEST_JSON};
use plugwatt_core::synth::{generate_synthetic, SynthConfig};
use plugwatt_core::validate::validate_dataset;
use plugwatt_core::{Dataset, Phase, PhaseKind, Site};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::plots::{self, BandPoint};
use crate::{
    AnalyzeArgs, Cli, Command, ExportPlotsArgs, Failure, FitArxArgs, ServeArgs, SimulateDemandArgs, SynthArgs,
    ValidateArgs,
};

type Outcome = Result<(), Failure>;

pub fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Validate(a) => validate(a),
        Command::Analyze(a) => analyze(a),
        Command::FitArx(a) => fit_arx(a),
        Command::SimulateDemand(a) => simulate_demand(a),
        Command::Serve(a) => serve(a),
        Command::ExportPlots(a) => export_plots(a),
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Loads and validates a dataset directory, returning it with its manifest hash.
fn load(dir: &Path) -> Result<(LoadedDataset, String), Failure> {
    let loaded = load_dataset(dir).map_err(|e| Failure::Validation(format!("{}: {e}", dir.display())))?;
    let bytes = fs::read(dir.join(MANIFEST_JSON))?;
    for (k, n) in &loaded.report.warnings {
        log::warn!("{n} × {k}");
    }
    Ok((loaded, sha256_hex(&bytes)))
}

fn parse_site(s: &str) -> Result<Site, Failure> {
    s.parse().map_err(|e: plugwatt_core::Error| Failure::Usage(e.to_string()))
}

fn check_site(arg: &str, ds: &Dataset) -> Result<Site, Failure> {
    let site = parse_site(arg)?;
    if site != ds.site {
        return Err(Failure::Validation(format!("dataset is for {}, not {site}", ds.site)));
    }
    Ok(site)
}

/// A phase of the dataset's site by label (case-insensitive) or by kind.
fn resolve_phase<'a>(ds: &'a Dataset, key: &str) -> Result<&'a Phase, Failure> {
    let phases: Vec<&Phase> = ds.calendar.for_site(ds.site).collect();
    if let Some(p) = phases.iter().find(|p| p.label.eq_ignore_ascii_case(key)) {
        return Ok(p);
    }
    let kind: PhaseKind = key
        .parse()
        .map_err(|_| Failure::Usage(format!("`{key}` is neither a phase label nor a phase kind")))?;
    let mut matching = phases.into_iter().filter(|p| p.kind == kind);
    match (matching.next(), matching.next()) {
        (Some(p), None) => Ok(p),
        (None, _) => Err(Failure::Validation(format!("no {} phase at {}", kind.as_str(), ds.site))),
        (Some(_), Some(_)) => Err(Failure::Usage(format!("several {} phases; pass a label", kind.as_str()))),
    }
}

fn synth(a: SynthArgs) -> Outcome {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str::<SynthConfig>(&text).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?
        }
        None => SynthConfig::default(),
    };
    if let Some(site) = &a.site {
        let monday = NaiveDate::from_ymd_opt(2016, 9, 12).expect("valid date");
        let two = SynthConfig::two_phase(parse_site(site)?, monday, 3, 1, a.reduction);
        cfg.site = two.site;
        cfg.phases = two.phases;
        cfg.reduction.feedback = a.reduction;
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(n) = a.participants {
        cfg.n_participants = n;
    }
    cfg.validate().map_err(|e| Failure::Validation(e.to_string()))?;
    let g = generate_synthetic(&cfg).map_err(|e| Failure::Validation(e.to_string()))?;
    let clock = cfg.clock().map_err(|e| Failure::Validation(e.to_string()))?;
    let manifest = Manifest::new(cfg.site, clock.tz, Some(cfg.seed), "plugwatt synth");
    save_dataset(&g.dataset, &manifest, &a.out)?;
    write_json(&a.out.join("truth.json"), &g.truth)?;
    println!(
        "wrote {}: {} participants, {} readings, {} phases, {} incentive days (seed {})",
        a.out.display(),
        cfg.n_participants,
        g.dataset.readings.len(),
        g.dataset.calendar.phases().len(),
        g.dataset.incentives.len(),
        cfg.seed
    );
    Ok(())
}

fn validate(a: ValidateArgs) -> Outcome {
    let (raw, manifest) = load_raw(&a.data).map_err(|e| Failure::Validation(format!("{}: {e}", a.data.display())))?;
    let report = validate_dataset(&raw);
    let hash = sha256_hex(&fs::read(a.data.join(MANIFEST_JSON))?);
    if let Some(out) = &a.out {
        create_dir(out)?;
        write_json(
            &out.join("validation.json"),
            &json!({ "manifest_sha256": hash, "site": manifest.site, "report": report }),
        )?;
    }
    for (k, n) in &report.violations {
        println!("violation: {n} × {k}");
    }
    for (k, n) in &report.warnings {
        println!("warning:   {n} × {k}");
    }
    if report.accepted() {
        println!("{}: ok ({} readings, site {})", a.data.display(), raw.readings.len(), manifest.site);
        Ok(())
    } else {
        Err(Failure::Validation(format!("{} violations", report.total_violations())))
    }
}

#[derive(Serialize)]
struct ConsistencyCsvRow<'a> {
    label: &'a str,
    t: f64,
    df: usize,
    p_published: f64,
    p_recomputed: f64,
    ci_low_watts: f64,
    ci_high_watts: f64,
    ci_low_pct: f64,
    ci_high_pct: f64,
    mean_reduction_pct: f64,
    delta_p: f64,
    delta_mean_reduction_pct: f64,
}

fn analyze(a: AnalyzeArgs) -> Outcome {
    let (loaded, hash) = load(&a.data)?;
    let ds = &loaded.dataset;
    let site = check_site(&a.site, ds)?;
    let phase = resolve_phase(ds, &a.phase)?;
    if phase.kind == PhaseKind::Baseline {
        return Err(Failure::Usage("analyze an experiment phase, not the baseline".into()));
    }
    let sample = build_differential_sample(ds, &phase.label).map_err(|e| Failure::Validation(e.to_string()))?;
    let result = paired_t_test(&sample).map_err(|e| Failure::Validation(e.to_string()))?;
    let baseline = ds.baseline_phase().map_err(|e| Failure::Validation(e.to_string()))?;
    let summaries = [summarize_phase(ds, &baseline.label)?, summarize_phase(ds, &phase.label)?];

    create_dir(&a.out)?;
    write_json(
        &a.out.join("results.json"),
        &json!({
            "manifest_sha256": hash,
            "site": site,
            "phase": phase,
            "baseline_phase": baseline.label,
            "result": result,
            "expt_pool_mean_watts": sample.expt_pool_mean_watts(),
            "daily_energy_kwh": summaries,
        }),
    )?;
    write_csv(&a.out.join("observations.csv"), &sample.observations)?;
    let report = paper_consistency_report();
    write_json(&a.out.join("consistency.json"), &json!({ "manifest_sha256": hash, "rows": report }))?;
    write_csv(
        &a.out.join("consistency.csv"),
        report.iter().map(|r| ConsistencyCsvRow {
            label: r.published.label,
            t: r.published.t,
            df: r.published.df,
            p_published: r.published.p,
            p_recomputed: r.p_two_tailed,
            ci_low_watts: r.ci95_watts[0],
            ci_high_watts: r.ci95_watts[1],
            ci_low_pct: r.ci95_pct[0],
            ci_high_pct: r.ci95_pct[1],
            mean_reduction_pct: r.mean_reduction_pct,
            delta_p: r.delta_p,
            delta_mean_reduction_pct: r.delta_mean_reduction_pct,
        }),
    )?;

    println!("{site} {} ({}) vs {}:", phase.label, phase.kind.as_str(), baseline.label);
    println!(
        "  n = {}, mean diff {:.2} W, t({}) = {:.3}, p = {:.4}",
        result.n, result.mean_diff_watts, result.df, result.t_stat, result.p_two_tailed
    );
    println!(
        "  reduction {:.2}% (95% CI {:.2}% .. {:.2}%; {:.2} .. {:.2} W)",
        result.mean_reduction_pct, result.ci95_pct[0], result.ci95_pct[1], result.ci95_watts[0], result.ci95_watts[1]
    );
    println!("published-summary consistency:");
    for r in &report {
        println!(
            "  {:<32} p {:.3e} (published {:.3e}), CI {:.2}%..{:.2}%, reduction {:.2}%",
            r.published.label, r.p_two_tailed, r.published.p, r.ci95_pct[0], r.ci95_pct[1], r.mean_reduction_pct
        );
    }
    println!("wrote {}", a.out.join("results.json").display());
    Ok(())
}

#[derive(Serialize)]
struct PredictionRow {
    day: NaiveDate,
    hour: u32,
    split: Split,
    observed: f64,
    predicted: f64,
    lower95: f64,
    upper95: f64,
}

fn predictions(fit: &plugwatt_core::arx::ArxFit, ds: &ArxDataset) -> Vec<PredictionRow> {
    ds.rows
        .iter()
        .map(|r| {
            let p = fit.coefficients.predict(&r.lags, r.screentime_prev_s, r.incentive_usd);
            PredictionRow {
                day: r.day,
                hour: r.hour,
                split: r.split,
                observed: r.target,
                predicted: p.point,
                lower95: p.interval95[0],
                upper95: p.interval95[1],
            }
        })
        .collect()
}

fn fit_arx(a: FitArxArgs) -> Outcome {
    let (loaded, hash) = load(&a.data)?;
    let ds = &loaded.dataset;
    let site = check_site(&a.site, ds)?;
    if a.max_lags == 0 || a.lags == Some(0) {
        return Err(Failure::Usage("lag counts must be at least 1".into()));
    }
    if !(a.train_frac > 0.0 && a.train_frac < 1.0) {
        return Err(Failure::Usage(format!("--train-frac {} not in (0, 1)", a.train_frac)));
    }
    let mut spec = ArxSpec::for_site(site);
    if let Some(n) = a.lags {
        spec = spec.with_lags(n);
    }
    if let Some(t) = &a.incentive_timing {
        spec.incentive_timing = t.parse::<IncentiveTiming>().map_err(|e| Failure::Usage(e.to_string()))?;
    }
    let series = hourly_series(ds).map_err(|e| Failure::Validation(e.to_string()))?;
    let rows = ArxDataset::from_series(Some(site), &series, spec)?;
    let rows = split_train_test(rows, a.train_frac).map_err(|e| Failure::Validation(e.to_string()))?;
    let fit = fit_ols(&rows).map_err(|e| Failure::Validation(e.to_string()))?;
    let test = evaluate(&fit.coefficients, rows.rows_in(Split::Test))?;
    let profile = residual_lag_profile(Some(site), &series, spec, a.max_lags)?;

    create_dir(&a.out)?;
    write_json(
        &a.out.join("model.json"),
        &json!({
            "manifest_sha256": hash,
            "site": site,
            "spec": spec,
            "train_frac": a.train_frac,
            "names": fit.names,
            "coefficients": fit.coefficients,
            "std_errors": fit.std_errors,
            "train_rows": fit.train_rows,
            "test": test,
            "diagnostics": "diagnostics.csv",
        }),
    )?;
    write_csv(&a.out.join("diagnostics.csv"), &profile)?;
    write_csv(&a.out.join("predictions.csv"), predictions(&fit, &rows))?;

    println!("{site} ARX ({} lags, incentive timing {}):", spec.n_lags, spec.incentive_timing);
    let values = fit.coefficient_vector();
    for ((name, v), se) in fit.names.iter().zip(&values).zip(&fit.std_errors) {
        println!("  {name:<14} {v:>10.5} (se {se:.5})");
    }
    println!("  sigma_eps      {:>10.5}", fit.coefficients.sigma_eps);
    println!(
        "  test: n = {}, rmse {:.3} W, accuracy {:.1}%",
        test.n, test.rmse, test.rms_accuracy_pct
    );
    for r in &profile {
        println!("  lags {}: residual lag-1 autocorr {:+.3}", r.n_lags, r.lag1_autocorr);
    }
    println!("wrote {}", a.out.join("model.json").display());
    Ok(())
}

#[derive(Debug, Deserialize)]
struct ScheduleRow {
    epoch: usize,
    incentive_usd: f64,
    #[serde(default)]
    screentime_prev_s: f64,
}

fn read_schedule(path: &Path, horizon: usize) -> Result<Vec<EpochInput>, Failure> {
    let mut inputs = vec![EpochInput::default(); horizon];
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    for (i, row) in rdr.deserialize::<ScheduleRow>().enumerate() {
        let row = row.map_err(|e| Failure::Validation(format!("{}:{}: {e}", path.display(), i + 2)))?;
        if row.epoch >= horizon {
            log::warn!("{}: epoch {} beyond horizon {horizon}; ignored", path.display(), row.epoch);
            continue;
        }
        inputs[row.epoch] = EpochInput {
            screentime_prev_s: row.screentime_prev_s,
            incentive_usd: row.incentive_usd,
        };
    }
    Ok(inputs)
}

#[derive(Debug, Serialize, Deserialize)]
struct ProfileRow {
    hour: u32,
    mean_kw: f64,
    std_kw: f64,
}

fn read_profile(path: &Path) -> Result<CyclostationaryProfile, Failure> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows: Vec<ProfileRow> = rdr
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    rows.sort_by_key(|r| r.hour);
    if rows.iter().map(|r| r.hour).ne(1..=24) {
        return Err(Failure::Validation(format!("{}: need hours 1..24 exactly once", path.display())));
    }
    CyclostationaryProfile::new(rows.iter().map(|r| r.mean_kw).collect(), rows.iter().map(|r| r.std_kw).collect())
        .map_err(|e| Failure::Validation(e.to_string()))
}

fn parse_start(s: &str) -> Result<NaiveDateTime, Failure> {
    let s = s.trim_end_matches('Z');
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M"))
        .map_err(|e| Failure::Usage(format!("--start `{s}`: {e}")))
}

#[derive(Serialize)]
struct PathRow {
    k: usize,
    hour_index: usize,
    incentive_usd: f64,
    screentime_prev_s: f64,
    r_pct: f64,
    l_np_kw: f64,
    l_p_kw: f64,
    l_total_kw: f64,
    mc_mean_kw: f64,
    mc_p05_kw: f64,
    mc_p95_kw: f64,
}

fn simulate_demand(a: SimulateDemandArgs) -> Outcome {
    if !(a.fp > 0.0 && a.fp < 1.0) {
        return Err(Failure::Usage(format!("--fp {} not in (0, 1)", a.fp)));
    }
    if a.horizon == 0 || a.mc == 0 {
        return Err(Failure::Usage("--horizon and --mc must be at least 1".into()));
    }
    let profile = match (&a.profile, &a.hourly_load) {
        (Some(p), _) => read_profile(p)?,
        (None, Some(p)) => {
            let file = fs::File::open(p).with_context(|| format!("reading {}", p.display()))?;
            let rows = read_hourly_load(file).map_err(|e| Failure::Validation(e.to_string()))?;
            let (profile, dropped) = ingest_profile(&rows).map_err(|e| Failure::Validation(e.to_string()))?;
            if !dropped.is_empty() {
                println!("dropped {} partial day(s) from {}", dropped.len(), p.display());
            }
            profile
        }
        (None, None) => CyclostationaryProfile::medium_office(),
    };
    let coeffs = match &a.coeffs {
        Some(p) => serde_json::from_slice::<ReductionCoefficients>(&fs::read(p)?)
            .map_err(|e| Failure::Validation(format!("{}: {e}", p.display())))?,
        None => ReductionCoefficients::cmu_table(),
    };
    let inputs = match &a.incentives {
        Some(p) => read_schedule(p, a.horizon)?,
        None => vec![EpochInput::default(); a.horizon],
    };
    let start = parse_start(&a.start)?;
    let horizon = Horizon {
        start_s: start.and_utc().timestamp(),
        start_hour_index: start.hour() as usize,
    };
    let scenario = RolloutScenario {
        coeffs,
        profile,
        f_p: a.fp,
        r0: a.r0,
        horizon,
        inputs,
    };
    let summary = policy_rollout(&scenario, a.mc, a.seed)?;
    let r = simulate_reduction(&scenario.coeffs, scenario.r0, &scenario.inputs, Noise::Zero)?;
    let path = integrate_demand(&scenario.profile, scenario.f_p, &r, &scenario.inputs, None, horizon)?;
    let scenario_hash = sha256_hex(&serde_json::to_vec(&scenario)?);

    create_dir(&a.out)?;
    write_json(
        &a.out.join("rollout.json"),
        &json!({
            "scenario_sha256": scenario_hash,
            "f_p": a.fp,
            "horizon": a.horizon,
            "r0": a.r0,
            "coeffs": scenario.coeffs,
            "start": start,
            "summary": summary,
        }),
    )?;
    write_csv(
        &a.out.join("profile.csv"),
        (0..24).map(|h| ProfileRow {
            hour: h as u32 + 1,
            mean_kw: scenario.profile.mean_kw[h],
            std_kw: scenario.profile.std_kw[h],
        }),
    )?;
    write_csv(
        &a.out.join("demand_path.csv"),
        path.epochs.iter().zip(&summary.epochs).map(|(e, b)| PathRow {
            k: e.k,
            hour_index: e.hour_index,
            incentive_usd: e.incentive_usd,
            screentime_prev_s: e.screentime_s,
            r_pct: e.r_pct,
            l_np_kw: e.l_np_kw,
            l_p_kw: e.l_p_kw,
            l_total_kw: e.l_total_kw,
            mc_mean_kw: b.l_total_kw.mean,
            mc_p05_kw: b.l_total_kw.p05,
            mc_p95_kw: b.l_total_kw.p95,
        }),
    )?;
    let band: Vec<BandPoint> = path
        .epochs
        .iter()
        .zip(&summary.epochs)
        .map(|(e, b)| BandPoint {
            x: e.k as f64,
            observed: None,
            point: e.l_total_kw,
            lower: b.l_total_kw.p05,
            upper: b.l_total_kw.p95,
        })
        .collect();
    plots::band_chart(&a.out.join("demand_path.svg"), "Total demand (kW): zero-noise path and 5–95% band", "epoch (h)", &band)?;

    println!(
        "{} epochs, f_p {}, {} draws (seed {}); R fixed point without inputs {:.4}%",
        a.horizon,
        a.fp,
        a.mc,
        a.seed,
        scenario.coeffs.fixed_point()
    );
    for (d, b) in summary.daily_kwh.iter().enumerate() {
        println!("  day {d}: {:.1} kWh (5–95%: {:.1} .. {:.1})", b.mean, b.p05, b.p95);
    }
    println!(
        "  peak {:.1} kW (5–95%: {:.1} .. {:.1})",
        summary.peak_kw.mean, summary.peak_kw.p05, summary.peak_kw.p95
    );
    println!("wrote {}", a.out.join("rollout.json").display());
    Ok(())
}

fn serve(a: ServeArgs) -> Outcome {
    let mut config = plugwatt_service::ServiceConfig::from_env().map_err(Failure::Usage)?;
    if let Some(d) = a.data {
        config.data_dir = Some(d);
    }
    if let Some(b) = a.bind {
        config.bind_addr = b.parse().map_err(|e| Failure::Usage(format!("--bind `{b}`: {e}")))?;
    }
    let dir = config
        .data_dir
        .clone()
        .ok_or_else(|| Failure::Usage("no dataset: pass --data or set PLUGWATT_DATA_DIR".into()))?;
    let (loaded, hash) = load(&dir)?;
    if config.operator_token.is_none() {
        log::warn!("no operator token configured; operator endpoints are disabled");
    }
    let clock = std::sync::Arc::new(plugwatt_service::SystemClock);
    let app = plugwatt_service::build(loaded.dataset, clock, &config).map_err(Failure::Validation)?;
    println!("serving {} (manifest {}) on {}", dir.display(), &hash[..12], config.bind_addr);
    std::io::stdout().flush()?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(plugwatt_service::serve(app, config.bind_addr))?;
    Ok(())
}

#[derive(Serialize)]
struct LagRowCsv {
    n_lags: usize,
    lag1_autocorr: f64,
    rmse: f64,
    rows: usize,
}

fn export_plots(a: ExportPlotsArgs) -> Outcome {
    let (loaded, hash) = load(&a.data)?;
    let ds = &loaded.dataset;
    create_dir(&a.out)?;

    let summaries = ds
        .calendar
        .for_site(ds.site)
        .map(|p| summarize_phase(ds, &p.label))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::Validation(e.to_string()))?;
    write_csv(&a.out.join("phase_summary.csv"), &summaries)?;
    plots::box_summary(
        &a.out.join("phase_summary.svg"),
        &format!("{}: daily energy per participant by phase (kWh)", ds.site),
        &summaries,
    )?;

    let spec = ArxSpec::for_site(ds.site);
    let series = hourly_series(ds).map_err(|e| Failure::Validation(e.to_string()))?;
    let profile = residual_lag_profile(Some(ds.site), &series, spec, a.max_lags)?;
    write_csv(
        &a.out.join("lag_profile.csv"),
        profile.iter().map(|r| LagRowCsv {
            n_lags: r.n_lags,
            lag1_autocorr: r.lag1_autocorr,
            rmse: r.rmse,
            rows: r.rows,
        }),
    )?;
    plots::lag_profile(&a.out.join("lag_profile.svg"), &profile)?;

    let rows = split_train_test(ArxDataset::from_series(Some(ds.site), &series, spec)?, a.train_frac)
        .map_err(|e| Failure::Validation(e.to_string()))?;
    let fit = fit_ols(&rows).map_err(|e| Failure::Validation(e.to_string()))?;
    let preds: Vec<PredictionRow> = predictions(&fit, &rows).into_iter().filter(|p| p.split == Split::Test).collect();
    write_csv(&a.out.join("prediction.csv"), &preds)?;
    let band: Vec<BandPoint> = preds
        .iter()
        .enumerate()
        .map(|(i, p)| BandPoint {
            x: i as f64,
            observed: Some(p.observed),
            point: p.predicted,
            lower: p.lower95,
            upper: p.upper95,
        })
        .collect();
    plots::band_chart(
        &a.out.join("prediction.svg"),
        "Test split: observed vs predicted differential (W) with 95% band",
        "test hour",
        &band,
    )?;
    write_json(
        &a.out.join("plots.json"),
        &json!({
            "manifest_sha256": hash,
            "site": ds.site,
            "files": ["phase_summary.csv", "phase_summary.svg", "lag_profile.csv", "lag_profile.svg",
                      "prediction.csv", "prediction.svg"],
        }),
    )?;
    println!("wrote 3 plots (CSV + SVG) to {}", a.out.display());
    Ok(())
}
