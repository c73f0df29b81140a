//! Static SVG figures from a trace.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use thiserror::Error;

use crate::trace::Trace;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("cannot write {path}: {msg}")]
    Draw { path: PathBuf, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("trace has no rows")]
    Empty,
}

/// Files written and panels skipped.
#[derive(Debug, Clone, Default)]
pub struct PlotOutput {
    pub files: Vec<PathBuf>,
    pub notes: Vec<String>,
}

const SIZE: (u32, u32) = (900, 600);

fn palette(k: usize) -> RGBColor {
    const C: [RGBColor; 8] = [
        RGBColor(31, 119, 180),
        RGBColor(255, 127, 14),
        RGBColor(44, 160, 44),
        RGBColor(214, 39, 40),
        RGBColor(148, 103, 189),
        RGBColor(140, 86, 75),
        RGBColor(227, 119, 194),
        RGBColor(23, 190, 207),
    ];
    C[k % C.len()]
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-6);
    (lo - pad, hi + pad)
}

/// Columns sharing `prefix`, keyed by the remainder of their name.
fn group<'a>(trace: &'a Trace, prefix: &str) -> BTreeMap<&'a str, usize> {
    trace
        .columns
        .iter()
        .enumerate()
        .filter_map(|(k, c)| c.strip_prefix(prefix).map(|rest| (rest, k)))
        .collect()
}

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
    color: RGBColor,
    dashed: bool,
}

fn draw_lines(path: &Path, title: &str, xlabel: &str, ylabel: &str, series: &[Series], zero_line: bool) -> Result<(), PlotError> {
    let err = |e: String| PlotError::Draw { path: path.to_path_buf(), msg: e };
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(e.to_string()))?;
    let (x0, x1) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).chain(zero_line.then_some(0.0)));
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(|e| err(e.to_string()))?;
    chart
        .configure_mesh()
        .x_desc(xlabel)
        .y_desc(ylabel)
        .draw()
        .map_err(|e| err(e.to_string()))?;
    if zero_line {
        chart
            .draw_series(LineSeries::new([(x0, 0.0), (x1, 0.0)], BLACK.stroke_width(1)))
            .map_err(|e| err(e.to_string()))?;
    }
    for s in series {
        let style = s.color.stroke_width(2);
        let drawn = if s.dashed {
            chart.draw_series(DashedLineSeries::new(s.points.iter().cloned(), 6, 4, style))
        } else {
            chart.draw_series(LineSeries::new(s.points.iter().cloned(), style))
        };
        let c = s.color;
        drawn
            .map_err(|e| err(e.to_string()))?
            .label(s.label.clone())
            .legend(move |(x, y)| PathElement::new([(x, y), (x + 18, y)], c.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| err(e.to_string()))?;
    root.present().map_err(|e| err(e.to_string()))?;
    Ok(())
}

fn over_time(trace: &Trace, col: usize) -> Vec<(f64, f64)> {
    trace.rows.iter().map(|r| (r[0], r[col])).collect()
}

/// Trajectories in the plane with `δ` tubes around each estimate.
fn trajectories(trace: &Trace, path: &Path) -> Result<(), PlotError> {
    let err = |e: String| PlotError::Draw { path: path.to_path_buf(), msg: e };
    let xs = group(trace, "x_");
    let agents: Vec<&str> = xs.keys().filter_map(|k| k.strip_suffix("_1")).collect();
    let planar: Vec<(&str, usize, usize)> =
        agents.iter().filter_map(|a| Some((*a, xs.get(format!("{a}_1").as_str()).copied()?, xs.get(format!("{a}_2").as_str()).copied()?))).collect();
    let hats = group(trace, "xhat_");
    let deltas = group(trace, "delta_");
    let mut estimates = Vec::new();
    for (pair, d) in &deltas {
        if let (Some(c1), Some(c2)) = (hats.get(format!("{pair}_1").as_str()), hats.get(format!("{pair}_2").as_str())) {
            estimates.push((*pair, *c1, *c2, *d));
        }
    }
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(e.to_string()))?;
    let (x0, x1) = bounds(planar.iter().flat_map(|(_, c, _)| trace.rows.iter().map(move |r| r[*c])));
    let (y0, y1) = bounds(planar.iter().flat_map(|(_, _, c)| trace.rows.iter().map(move |r| r[*c])));
    let mut chart = ChartBuilder::on(&root)
        .caption("State and estimate trajectories", ("sans-serif", 22))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(|e| err(e.to_string()))?;
    chart.configure_mesh().x_desc("x_1").y_desc("x_2").draw().map_err(|e| err(e.to_string()))?;
    let px_per_unit = f64::from(SIZE.0 - 100) / (x1 - x0);
    for (k, (agent, c1, c2)) in planar.iter().enumerate() {
        let color = palette(k);
        chart
            .draw_series(LineSeries::new(trace.rows.iter().map(|r| (r[*c1], r[*c2])), color.stroke_width(2)))
            .map_err(|e| err(e.to_string()))?
            .label(format!("agent {agent}"))
            .legend(move |(x, y)| PathElement::new([(x, y), (x + 18, y)], color.stroke_width(2)));
        for (pair, h1, h2, d) in &estimates {
            if pair.rsplit('_').next() != Some(agent) {
                continue;
            }
            chart
                .draw_series(DashedLineSeries::new(trace.rows.iter().map(|r| (r[*h1], r[*h2])), 4, 4, color.mix(0.6).stroke_width(1)))
                .map_err(|e| err(e.to_string()))?;
            let stride = (trace.rows.len() / 10).max(1);
            chart
                .draw_series(trace.rows.iter().step_by(stride).map(|r| {
                    let radius = (r[*d] * px_per_unit).max(1.0) as i32;
                    Circle::new((r[*h1], r[*h2]), radius, color.mix(0.25).stroke_width(1))
                }))
                .map_err(|e| err(e.to_string()))?;
        }
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| err(e.to_string()))?;
    root.present().map_err(|e| err(e.to_string()))?;
    Ok(())
}

/// Write the four figures into `out`.
pub fn plot_trace(trace: &Trace, out: &Path) -> Result<PlotOutput, PlotError> {
    if trace.rows.is_empty() {
        return Err(PlotError::Empty);
    }
    std::fs::create_dir_all(out)?;
    let mut result = PlotOutput::default();

    let a = out.join("trajectories.svg");
    trajectories(trace, &a)?;
    result.files.push(a);

    let errs = group(trace, "err_");
    let deltas = group(trace, "delta_");
    if errs.is_empty() {
        result.notes.push("no observer pairs: estimation-error and estimated-robustness panels omitted".into());
    } else {
        let mut series = Vec::new();
        for (k, (pair, col)) in errs.iter().enumerate() {
            series.push(Series { label: format!("|err| {pair}"), points: over_time(trace, *col), color: palette(k), dashed: false });
            if let Some(d) = deltas.get(pair) {
                series.push(Series { label: format!("delta {pair}"), points: over_time(trace, *d), color: palette(k), dashed: true });
            }
        }
        let b = out.join("estimation_errors.svg");
        draw_lines(&b, "Estimation errors and their funnels", "t", "norm", &series, false)?;
        result.files.push(b);

        let series: Vec<Series> = group(trace, "rhohat_")
            .iter()
            .enumerate()
            .map(|(k, (task, col))| Series { label: task.to_string(), points: over_time(trace, *col), color: palette(k), dashed: false })
            .collect();
        let c = out.join("estimated_robustness.svg");
        draw_lines(&c, "Robustness from estimated states", "t", "rho_hat", &series, true)?;
        result.files.push(c);
    }

    let series: Vec<Series> = group(trace, "rho_")
        .iter()
        .enumerate()
        .map(|(k, (task, col))| Series { label: task.to_string(), points: over_time(trace, *col), color: palette(k), dashed: false })
        .collect();
    let d = out.join("true_robustness.svg");
    draw_lines(&d, "Robustness from true states", "t", "rho", &series, true)?;
    result.files.push(d);
    Ok(result)
}
