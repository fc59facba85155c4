use std::path::Path;

use plotters::prelude::*;

/// Line series of a sweep: the mean-exit aggregate against the first swept
/// parameter, one line per value of the second.
#[derive(Debug, Clone)]
pub struct SweepSeries {
    pub x_label: String,
    pub lines: Vec<(String, Vec<(f64, f64)>)>,
}

impl SweepSeries {
    pub fn from_rows<'a>(
        parameters: &[&str],
        rows: impl Iterator<Item = (&'a [f64], f64)>,
    ) -> Self {
        let mut lines: Vec<(Option<f64>, Vec<(f64, f64)>)> = Vec::new();
        for (params, y) in rows {
            let key = params.get(1).copied();
            match lines.iter_mut().find(|(k, _)| *k == key) {
                Some((_, pts)) => pts.push((params[0], y)),
                None => lines.push((key, vec![(params[0], y)])),
            }
        }
        let lines = lines
            .into_iter()
            .map(|(key, mut pts)| {
                pts.sort_by(|a, b| a.0.total_cmp(&b.0));
                let name = match (key, parameters.get(1)) {
                    (Some(v), Some(p)) => format!("{p} = {v}"),
                    _ => "sum mu E tau".to_string(),
                };
                (name, pts)
            })
            .collect();
        SweepSeries {
            x_label: parameters
                .first()
                .copied()
                .unwrap_or("parameter")
                .to_string(),
            lines,
        }
    }

    fn bounds(&self) -> Option<((f64, f64), (f64, f64))> {
        let pts = self.lines.iter().flat_map(|(_, p)| p.iter());
        let (mut x0, mut x1, mut y0, mut y1) = (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        );
        for &(x, y) in pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !(x0.is_finite() && y0.is_finite()) {
            return None;
        }
        let pad = |lo: f64, hi: f64| {
            let w = (hi - lo).max(1e-9 * hi.abs().max(1.0));
            (lo - 0.05 * w, hi + 0.05 * w)
        };
        Some((pad(x0, x1), pad(y0, y1)))
    }
}

pub fn sweep_svg(path: &Path, series: &SweepSeries) -> Result<(), Box<dyn std::error::Error>> {
    let ((x0, x1), (y0, y1)) = series.bounds().ok_or("no finite points to plot")?;
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .margin(20)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, y0..y1)?;
    chart
        .configure_mesh()
        .x_desc(series.x_label.as_str())
        .y_desc("sum mu E tau")
        .draw()?;
    for (i, (name, pts)) in series.lines.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))?
            .label(name.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
        chart.draw_series(pts.iter().map(|&p| Circle::new(p, 3, color.filled())))?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()?;
    root.present()?;
    Ok(())
}
