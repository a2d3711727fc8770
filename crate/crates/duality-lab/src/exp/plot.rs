//! Minimal self-contained SVG plots over result rows: histograms, curves
//! with confidence bands, and space-time fan plots of particle
//! trajectories.

use super::MetricRow;
use crate::error::{Error, Result};
use std::path::Path;

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Histogram,
    Curve,
    Fan,
}

impl std::str::FromStr for PlotKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "histogram" => Ok(PlotKind::Histogram),
            "curve" => Ok(PlotKind::Curve),
            "fan" => Ok(PlotKind::Fan),
            other => Err(Error::Config(format!(
                "unknown plot kind: {other} (histogram|curve|fan)"
            ))),
        }
    }
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn of(xs: impl Iterator<Item = f64>, ys: impl Iterator<Item = f64>) -> Frame {
        let mut f = Frame {
            x_min: f64::INFINITY,
            x_max: f64::NEG_INFINITY,
            y_min: f64::INFINITY,
            y_max: f64::NEG_INFINITY,
        };
        for x in xs {
            f.x_min = f.x_min.min(x);
            f.x_max = f.x_max.max(x);
        }
        for y in ys {
            f.y_min = f.y_min.min(y);
            f.y_max = f.y_max.max(y);
        }
        if f.x_max <= f.x_min {
            f.x_max = f.x_min + 1.0;
        }
        if f.y_max <= f.y_min {
            f.y_max = f.y_min + 1.0;
        }
        f
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x_min) / (self.x_max - self.x_min) * (W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y_min) / (self.y_max - self.y_min) * (H - 2.0 * MARGIN)
    }
}

fn svg_header(title: &str) -> String {
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<text x=\"{tx}\" y=\"20\" font-size=\"14\" text-anchor=\"middle\">{title}</text>\n"
        ),
        w = W,
        h = H,
        tx = W / 2.0,
        title = title
    )
}

fn axes(frame: &Frame) -> String {
    let mut s = format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN,
        t = MARGIN
    );
    for k in 0..=4 {
        let x = frame.x_min + (frame.x_max - frame.x_min) * k as f64 / 4.0;
        let y = frame.y_min + (frame.y_max - frame.y_min) * k as f64 / 4.0;
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"middle\">{:.3}</text>\n",
            frame.px(x),
            H - MARGIN + 16.0,
            x
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"end\">{:.3}</text>\n",
            MARGIN - 6.0,
            frame.py(y) + 3.0,
            y
        ));
    }
    s
}

/// Split a metric name of the form `series@x` into its series and the
/// numeric x-coordinate.
fn series_x(name: &str) -> Option<(&str, f64)> {
    let (series, x) = name.rsplit_once('@')?;
    // tolerate `key=value` suffixes like density@h=0.05
    let x = x.rsplit_once('=').map(|(_, v)| v).unwrap_or(x);
    x.parse().ok().map(|x| (series, x))
}

/// Curve plot of `series@x` rows, one polyline per series, with a CI band
/// when stderr is present.
pub fn curve_svg(rows: &[MetricRow]) -> Result<String> {
    let mut series: Vec<(&str, Vec<&MetricRow>)> = Vec::new();
    for row in rows {
        if let Some((name, _)) = series_x(&row.name) {
            match series.iter_mut().find(|(n, _)| *n == name) {
                Some((_, v)) => v.push(row),
                None => series.push((name, vec![row])),
            }
        }
    }
    if series.is_empty() {
        return Err(Error::Config(
            "no series@x rows to plot as a curve".into(),
        ));
    }
    let frame = Frame::of(
        series
            .iter()
            .flat_map(|(_, v)| v.iter().filter_map(|r| series_x(&r.name).map(|s| s.1))),
        series
            .iter()
            .flat_map(|(_, v)| v.iter().flat_map(|r| [r.ci_low, r.ci_high])),
    );
    let mut svg = svg_header("curve");
    svg.push_str(&axes(&frame));
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"];
    for (si, (name, rows)) in series.iter().enumerate() {
        let mut pts: Vec<(f64, &MetricRow)> = rows
            .iter()
            .filter_map(|r| series_x(&r.name).map(|(_, x)| (x, *r)))
            .collect();
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let color = colors[si % colors.len()];
        if pts.iter().any(|(_, r)| r.stderr > 0.0) {
            let mut band = String::new();
            for (x, r) in &pts {
                band.push_str(&format!("{},{} ", frame.px(*x), frame.py(r.ci_high)));
            }
            for (x, r) in pts.iter().rev() {
                band.push_str(&format!("{},{} ", frame.px(*x), frame.py(r.ci_low)));
            }
            svg.push_str(&format!(
                "<polygon points=\"{}\" fill=\"{}\" opacity=\"0.15\"/>\n",
                band.trim(),
                color
            ));
        }
        let line: String = pts
            .iter()
            .map(|(x, r)| format!("{},{} ", frame.px(*x), frame.py(r.value)))
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
            line.trim(),
            color
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{}\">{}</text>\n",
            W - MARGIN - 120.0,
            MARGIN + 14.0 * (si as f64 + 1.0),
            color,
            name
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Histogram over rows (one bar per row, labelled by metric name).
pub fn histogram_svg(rows: &[MetricRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::Config("empty result: nothing to plot".into()));
    }
    let y_max = rows.iter().map(|r| r.value).fold(0.0f64, f64::max);
    let frame = Frame {
        x_min: 0.0,
        x_max: rows.len() as f64,
        y_min: 0.0,
        y_max: if y_max > 0.0 { y_max } else { 1.0 },
    };
    let mut svg = svg_header("histogram");
    svg.push_str(&axes(&frame));
    let bw = (W - 2.0 * MARGIN) / rows.len() as f64;
    for (i, row) in rows.iter().enumerate() {
        let x = frame.px(i as f64) + 0.1 * bw;
        let y = frame.py(row.value.max(0.0));
        svg.push_str(&format!(
            "<rect x=\"{x}\" y=\"{y}\" width=\"{}\" height=\"{}\" fill=\"#1f77b4\"/>\n",
            0.8 * bw,
            (H - MARGIN) - y
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"9\" text-anchor=\"middle\">{}</text>\n",
            x + 0.4 * bw,
            H - MARGIN + 26.0,
            row.name
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Space-time fan plot from a trajectories.csv: one polyline per particle,
/// truncated where the particle disappears.
pub fn fan_svg(trajectories_csv: &str) -> Result<String> {
    let mut paths: Vec<(u64, Vec<(f64, f64)>)> = Vec::new();
    for (i, line) in trajectories_csv.lines().enumerate() {
        if i == 0 {
            if !line.starts_with("particle,") {
                return Err(Error::Config("not a trajectories.csv file".into()));
            }
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            continue;
        }
        let id: u64 = parts[0]
            .parse()
            .map_err(|_| Error::Config("bad particle id".into()))?;
        let t: f64 = parts[1]
            .parse()
            .map_err(|_| Error::Config("bad time".into()))?;
        let x: f64 = parts[2]
            .parse()
            .map_err(|_| Error::Config("bad position".into()))?;
        match paths.iter_mut().find(|(pid, _)| *pid == id) {
            Some((_, v)) => v.push((t, x)),
            None => paths.push((id, vec![(t, x)])),
        }
    }
    if paths.is_empty() {
        return Err(Error::Config("empty trajectory file".into()));
    }
    let frame = Frame::of(
        paths.iter().flat_map(|(_, v)| v.iter().map(|p| p.1)),
        paths.iter().flat_map(|(_, v)| v.iter().map(|p| p.0)),
    );
    let mut svg = svg_header("particle fan (x horizontal, time upward)");
    svg.push_str(&axes(&frame));
    for (id, pts) in &paths {
        let color = format!("hsl({}, 60%, 40%)", (id * 47) % 360);
        // split wrap-around jumps on the torus into separate strokes
        let mut segments: Vec<Vec<(f64, f64)>> = vec![vec![]];
        for w in pts.windows(2) {
            segments.last_mut().unwrap().push(w[0]);
            let dx = (w[1].1 - w[0].1).abs();
            if dx > (frame.x_max - frame.x_min) / 2.0 {
                segments.push(vec![]);
            }
        }
        if let Some(&last) = pts.last() {
            segments.last_mut().unwrap().push(last);
        }
        for seg in segments.iter().filter(|s| s.len() > 1) {
            let line: String = seg
                .iter()
                .map(|(t, x)| format!("{},{} ", frame.px(*x), frame.py(*t)))
                .collect();
            svg.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1\"/>\n",
                line.trim(),
                color
            ));
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Entry point used by the CLI: reads the result artifacts in `dir` and
/// writes `plot_<kind>.svg` next to them.
pub fn plot_results(dir: &Path, kind: PlotKind) -> Result<std::path::PathBuf> {
    let svg = match kind {
        PlotKind::Fan => {
            let csv = std::fs::read_to_string(dir.join("trajectories.csv")).map_err(|_| {
                Error::Config(format!(
                    "no trajectories.csv in {} (fan plots need a particle experiment)",
                    dir.display()
                ))
            })?;
            fan_svg(&csv)?
        }
        PlotKind::Curve => {
            let rows = super::read_results_csv(&dir.join("results.csv"))?;
            curve_svg(&rows)?
        }
        PlotKind::Histogram => {
            let rows = super::read_results_csv(&dir.join("results.csv"))?;
            histogram_svg(&rows)?
        }
    };
    let name = match kind {
        PlotKind::Histogram => "plot_histogram.svg",
        PlotKind::Curve => "plot_curve.svg",
        PlotKind::Fan => "plot_fan.svg",
    };
    let path = dir.join(name);
    std::fs::write(&path, svg)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(name: &str, value: f64, stderr: f64) -> MetricRow {
        MetricRow {
            name: name.into(),
            value,
            stderr,
            ci_low: value - 2.0 * stderr,
            ci_high: value + 2.0 * stderr,
            n_samples: 100,
        }
    }

    #[test]
    fn curve_includes_band_and_polyline() {
        let rows = vec![
            row("p@1", 0.5, 0.01),
            row("p@2", 0.6, 0.01),
            row("p@5", 0.8, 0.01),
        ];
        let svg = curve_svg(&rows).unwrap();
        assert!(svg.contains("<polyline"));
        assert!(svg.contains("<polygon"), "missing CI band");
        assert!(curve_svg(&[]).is_err());
        assert!(curve_svg(&[row("plain", 1.0, 0.0)]).is_err());
    }

    #[test]
    fn histogram_renders_bars() {
        let rows = vec![row("a", 1.0, 0.0), row("b", 2.0, 0.0)];
        let svg = histogram_svg(&rows).unwrap();
        assert_eq!(svg.matches("<rect").count(), 3); // background + 2 bars
        assert!(histogram_svg(&[]).is_err());
    }

    #[test]
    fn fan_one_polyline_per_particle_truncated() {
        let csv = "particle,time,position,alive\n\
                   0,0,0.0,1\n1,0,1.0,1\n\
                   0,0.1,0.05,1\n1,0.1,0.9,1\n\
                   0,0.2,0.1,1\n";
        let svg = fan_svg(csv).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        // particle 1 truncated at 0.1: its polyline has 2 points
        assert!(fan_svg("particle,time,position,alive\n").is_err());
        assert!(fan_svg("bogus\n").is_err());
    }
}
