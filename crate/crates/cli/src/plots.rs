//! Static SVG renders of the result figures.

use std::path::Path;

use anyhow::{anyhow, Result};
use plotters::prelude::*;
use plugwatt_core::arx::LagProfileRow;
use plugwatt_core::inference::SummaryStats;

const SIZE: (u32, u32) = (900, 500);
const ORANGE: RGBColor = RGBColor(230, 126, 34);
const GREEN: RGBColor = RGBColor(39, 174, 96);

fn err<E: std::fmt::Debug>(e: E) -> anyhow::Error {
    anyhow!("plot rendering: {e:?}")
}

/// Padded `[lo, hi]` covering all values.
fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.08).max(1e-6);
    (lo - pad, hi + pad)
}

/// Box-and-whisker per phase from five-number summaries, with the mean as a dot.
pub fn box_summary(path: &Path, title: &str, phases: &[SummaryStats]) -> Result<()> {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let (lo, hi) = range(phases.iter().flat_map(|s| [s.min, s.max]));
    let n = phases.len().max(1);
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d(-0.5f64..n as f64 - 0.5, lo..hi)
        .map_err(err)?;
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_labels(n)
        .x_label_formatter(&|x| {
            let i = x.round();
            if (x - i).abs() < 1e-9 && i >= 0.0 {
                phases.get(i as usize).map(|s| s.phase.clone()).unwrap_or_default()
            } else {
                String::new()
            }
        })
        .y_desc("kWh/day")
        .draw()
        .map_err(err)?;
    for (i, s) in phases.iter().enumerate() {
        let x = i as f64;
        let w = 0.25;
        chart
            .draw_series([
                Rectangle::new([(x - w, s.q1), (x + w, s.q3)], ORANGE.mix(0.35).filled()),
                Rectangle::new([(x - w, s.q1), (x + w, s.q3)], ORANGE.stroke_width(2)),
            ])
            .map_err(err)?;
        chart
            .draw_series(
                [
                    vec![(x - w, s.median), (x + w, s.median)],
                    vec![(x, s.q3), (x, s.max)],
                    vec![(x, s.q1), (x, s.min)],
                    vec![(x - w / 2.0, s.max), (x + w / 2.0, s.max)],
                    vec![(x - w / 2.0, s.min), (x + w / 2.0, s.min)],
                ]
                .into_iter()
                .map(|pts| PathElement::new(pts, BLACK.stroke_width(2))),
            )
            .map_err(err)?;
        chart
            .draw_series([Circle::new((x, s.mean), 4, BLACK.filled())])
            .map_err(err)?;
    }
    root.present().map_err(err)
}

/// Residual lag-1 autocorrelation against the number of lags in the model.
pub fn lag_profile(path: &Path, rows: &[LagProfileRow]) -> Result<()> {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let (lo, hi) = range(rows.iter().map(|r| r.lag1_autocorr).chain([0.0]));
    let max = rows.len().max(1) as f64;
    let mut chart = ChartBuilder::on(&root)
        .caption("Residual lag-1 autocorrelation by model order", ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d(0.5f64..max + 0.5, lo..hi)
        .map_err(err)?;
    chart
        .configure_mesh()
        .x_labels(rows.len().max(1))
        .x_label_formatter(&|x| format!("{x:.0}"))
        .x_desc("lags in model")
        .y_desc("autocorrelation")
        .draw()
        .map_err(err)?;
    chart
        .draw_series([PathElement::new(vec![(0.5, 0.0), (max + 0.5, 0.0)], BLACK.mix(0.4))])
        .map_err(err)?;
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.n_lags as f64, r.lag1_autocorr)).collect();
    chart.draw_series(LineSeries::new(pts.clone(), ORANGE.stroke_width(2))).map_err(err)?;
    chart
        .draw_series(pts.into_iter().map(|p| Circle::new(p, 4, ORANGE.filled())))
        .map_err(err)?;
    root.present().map_err(err)
}

pub struct BandPoint {
    pub x: f64,
    pub observed: Option<f64>,
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
}

/// A point series with a shaded interval band and optional observations.
pub fn band_chart(path: &Path, title: &str, x_desc: &str, pts: &[BandPoint]) -> Result<()> {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let (lo, hi) = range(pts.iter().flat_map(|p| [p.lower, p.upper, p.point, p.observed.unwrap_or(p.point)]));
    let (x0, x1) = match (pts.first(), pts.last()) {
        (Some(a), Some(b)) if b.x > a.x => (a.x, b.x),
        _ => (0.0, 1.0),
    };
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d(x0..x1, lo..hi)
        .map_err(err)?;
    chart.configure_mesh().x_desc(x_desc).draw().map_err(err)?;
    let band: Vec<(f64, f64)> = pts
        .iter()
        .map(|p| (p.x, p.upper))
        .chain(pts.iter().rev().map(|p| (p.x, p.lower)))
        .collect();
    chart
        .draw_series([Polygon::new(band, GREEN.mix(0.2).filled())])
        .map_err(err)?;
    chart
        .draw_series(LineSeries::new(pts.iter().map(|p| (p.x, p.point)), GREEN.stroke_width(2)))
        .map_err(err)?
        .label("model")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], GREEN.stroke_width(2)));
    if pts.iter().any(|p| p.observed.is_some()) {
        chart
            .draw_series(LineSeries::new(
                pts.iter().filter_map(|p| p.observed.map(|o| (p.x, o))),
                ORANGE.stroke_width(1),
            ))
            .map_err(err)?
            .label("observed")
            .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], ORANGE.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK.mix(0.3))
        .draw()
        .map_err(err)?;
    root.present().map_err(err)
}
