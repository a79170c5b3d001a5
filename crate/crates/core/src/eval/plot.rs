//! SVG line charts of sweep results.

use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::error::{OdefsError, Result};
use crate::eval::experiments::{Experiment, SweepResult};

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn plot_err<E: std::fmt::Display>(e: E) -> OdefsError {
    OdefsError::Plot(e.to_string())
}

fn padded_range(values: impl Iterator<Item = f64>) -> std::ops::Range<f64> {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return 0.0..1.0;
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
    (lo - pad)..(hi + pad)
}

/// Draws every series as a line with point markers.
pub fn line_chart(path: &Path, title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<()> {
    let x_range = padded_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let y_range = padded_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(16)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x_range, y_range)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc(x_label)
        .y_desc(y_label)
        .draw()
        .map_err(plot_err)?;
    for (i, s) in series.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(s.points.iter().copied(), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(s.name.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
        chart
            .draw_series(s.points.iter().map(|&p| Circle::new(p, 3, color.filled())))
            .map_err(plot_err)?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

/// Renders the charts for a sweep into `dir` and returns their paths.
pub fn plot_sweep(result: &SweepResult, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|source| OdefsError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let name = result.experiment.name();
    let x_label = result.experiment.parameter_name();
    let pts = |f: fn(&crate::eval::experiments::SweepRow) -> f64| -> Vec<(f64, f64)> {
        result.rows.iter().map(|r| (r.parameter, f(r))).collect()
    };
    let mut written = Vec::new();

    let auc_path = dir.join(format!("{name}_auc.svg"));
    let mut auc_series = vec![Series {
        name: "ODEFS".into(),
        points: pts(|r| r.mean_auc),
    }];
    if result.experiment == Experiment::Noise {
        auc_series.push(Series {
            name: "bare LeSiNN".into(),
            points: pts(|r| r.mean_bare_auc),
        });
    }
    line_chart(&auc_path, &format!("{name}: AUC"), x_label, "mean AUC", &auc_series)?;
    written.push(auc_path);

    let time_path = dir.join(format!("{name}_runtime.svg"));
    let time_series = [Series {
        name: "ODEFS".into(),
        points: pts(|r| r.mean_seconds),
    }];
    line_chart(&time_path, &format!("{name}: runtime"), x_label, "seconds", &time_series)?;
    written.push(time_path);
    Ok(written)
}
