//! SVG figures of the per-epoch metrics.

use std::path::Path;

use plotters::prelude::*;

use crate::report::ExperimentReport;
use crate::HarnessError;

const SIZE: (u32, u32) = (900, 540);

fn plot_err<E: std::fmt::Debug>(e: E) -> HarnessError {
    HarnessError::Plot(format!("{e:?}"))
}

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

fn log_chart(path: &Path, title: &str, series: &[Series], band: Option<(f64, f64)>) -> Result<(), HarnessError> {
    let positive = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1))
        .chain(band.iter().flat_map(|b| [b.0, b.1]))
        .filter(|v| v.is_finite() && *v > 0.0);
    let (lo, hi) = positive.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo * 0.5, hi * 2.0) } else { (1e-3, 1.0) };
    let t_max = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .fold(1.0f64, f64::max);

    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(70)
        .build_cartesian_2d(0.0..t_max, (lo..hi).log_scale())
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("time [s]")
        .y_label_formatter(&|v| format!("{v:.1e}"))
        .draw()
        .map_err(plot_err)?;
    for (i, s) in series.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        let pts: Vec<_> = s.points.iter().copied().filter(|p| p.1 > 0.0 && p.1.is_finite()).collect();
        chart
            .draw_series(LineSeries::new(pts, color.stroke_width(2)))
            .map_err(plot_err)?
            .label(s.label.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
    }
    if let Some((b_lo, b_hi)) = band {
        for v in [b_lo, b_hi] {
            chart
                .draw_series(LineSeries::new(vec![(0.0, v), (t_max, v)], BLACK.stroke_width(1)))
                .map_err(plot_err)?;
        }
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

/// `fig_avg_abs_error_x{i}.svg`, `fig_rmse_x{i}.svg` and `fig_nees.svg`.
pub fn write_figures(report: &ExperimentReport, dir: &Path) -> Result<(), HarnessError> {
    let times = &report.times;
    for i in 0..report.state_dim {
        let pick = |rows: &Vec<Vec<f64>>| -> Vec<(f64, f64)> {
            times.iter().zip(rows).map(|(t, r)| (*t, r[i])).collect()
        };
        let abs: Vec<Series> = report
            .estimators
            .iter()
            .map(|(l, m)| Series {
                label: l.clone(),
                points: pick(&m.avg_abs_error),
            })
            .collect();
        log_chart(
            &dir.join(format!("fig_avg_abs_error_x{i}.svg")),
            &format!("average absolute error, x{i}"),
            &abs,
            None,
        )?;
        let mut rms: Vec<Series> = report
            .estimators
            .iter()
            .map(|(l, m)| Series {
                label: l.clone(),
                points: pick(&m.rms_error),
            })
            .collect();
        if let Some(c) = &report.crlb {
            rms.push(Series {
                label: "crlb".into(),
                points: pick(&c.sqrt_bound),
            });
        }
        log_chart(&dir.join(format!("fig_rmse_x{i}.svg")), &format!("RMSE, x{i}"), &rms, None)?;
    }
    let nees: Vec<Series> = report
        .estimators
        .iter()
        .filter_map(|(l, m)| {
            let v = m.nees.as_ref()?;
            Some(Series {
                label: l.clone(),
                points: times
                    .iter()
                    .zip(v)
                    .filter_map(|(t, z)| z.map(|z| (*t, z)))
                    .collect(),
            })
        })
        .collect();
    log_chart(&dir.join("fig_nees.svg"), "average NEES", &nees, Some(report.nees_bounds))
}
