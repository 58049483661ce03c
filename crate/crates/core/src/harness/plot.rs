//! Self-contained SVG charts rendered from the CSV files the harness writes.
//! Nothing here computes results; every coordinate comes from a CSV cell.

use std::fmt::Write as _;

use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 64.0;

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn fit(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let range = |it: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            let pad = ((hi - lo) * 0.08).max(0.01);
            (lo - pad, hi + pad)
        };
        Frame {
            x: range(&mut xs.clone()),
            y: range(&mut ys.clone()),
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn open(svg: &mut String, frame: &Frame, title: &str, xlabel: &str, ylabel: &str) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN);
    let _ = writeln!(
        svg,
        r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let t = f64::from(i) / 4.0;
        let xv = frame.x.0 + t * (frame.x.1 - frame.x.0);
        let yv = frame.y.0 + t * (frame.y.1 - frame.y.0);
        let (px, py) = (frame.px(xv), frame.py(yv));
        let _ = writeln!(
            svg,
            r#"<line x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{xv:.3}</text>"#,
            y0 + 5.0,
            y0 + 18.0
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{yv:.3}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 16.0,
        escape(xlabel)
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(ylabel)
    );
}

fn parse(field: Option<&str>, what: &str) -> Result<f64> {
    field
        .and_then(|s| s.parse::<f64>().ok())
        .ok_or_else(|| Error::Data(format!("plot input: bad or missing {what}")))
}

/// Labeled scatter from CSV rows `label,accuracy,metric`: metric on the x axis,
/// accuracy on the y axis.
pub fn scatter_svg(points_csv: &str, title: &str, metric_name: &str) -> Result<String> {
    let mut rdr = csv::Reader::from_reader(points_csv.as_bytes());
    let mut pts = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let label = rec.get(0).unwrap_or("").to_owned();
        pts.push((label, parse(rec.get(2), "metric")?, parse(rec.get(1), "accuracy")?));
    }
    if pts.is_empty() {
        return Err(Error::Data("plot input has no points".into()));
    }
    let frame = Frame::fit(pts.iter().map(|p| p.1), pts.iter().map(|p| p.2));
    let mut svg = String::new();
    open(&mut svg, &frame, title, metric_name, "accuracy");
    for (label, x, y) in &pts {
        let (px, py) = (frame.px(*x), frame.py(*y));
        let fill = if label == "original" { "#1f77b4" } else { "#d62728" };
        let _ = writeln!(
            svg,
            r#"<circle class="point" cx="{px:.2}" cy="{py:.2}" r="5" fill="{fill}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            px + 7.0,
            py - 7.0,
            escape(label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Trade-off curve from the curve CSV
/// (`d_r,acc_mean,acc_std,metric_mean,metric_std,n_seeds`): mean accuracy
/// against mean metric with a ±1 std accuracy band and metric error bars.
pub fn curve_svg(curve_csv: &str, title: &str, metric_name: &str) -> Result<String> {
    let mut rdr = csv::Reader::from_reader(curve_csv.as_bytes());
    let mut pts = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        pts.push([
            parse(rec.get(0), "d_r")?,
            parse(rec.get(1), "acc_mean")?,
            parse(rec.get(2), "acc_std")?,
            parse(rec.get(3), "metric_mean")?,
            parse(rec.get(4), "metric_std")?,
        ]);
    }
    if pts.is_empty() {
        return Err(Error::Data("plot input has no points".into()));
    }
    let xs = pts.iter().flat_map(|p| [p[3] - p[4], p[3] + p[4]]);
    let ys = pts.iter().flat_map(|p| [p[1] - p[2], p[1] + p[2]]);
    let frame = Frame::fit(xs, ys);
    let mut svg = String::new();
    open(&mut svg, &frame, title, metric_name, "accuracy");

    let mut by_x = pts.clone();
    by_x.sort_by(|a, b| a[3].total_cmp(&b[3]));
    let upper = by_x.iter().map(|p| (frame.px(p[3]), frame.py(p[1] + p[2])));
    let lower = by_x.iter().rev().map(|p| (frame.px(p[3]), frame.py(p[1] - p[2])));
    let band: Vec<String> = upper.chain(lower).map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    let _ = writeln!(
        svg,
        r##"<polygon class="band" points="{}" fill="#1f77b4" fill-opacity="0.2" stroke="none"/>"##,
        band.join(" ")
    );
    let line: Vec<String> = pts
        .iter()
        .map(|p| format!("{:.2},{:.2}", frame.px(p[3]), frame.py(p[1])))
        .collect();
    let _ = writeln!(
        svg,
        r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##,
        line.join(" ")
    );
    for p in &pts {
        let (px, py) = (frame.px(p[3]), frame.py(p[1]));
        let _ = writeln!(
            svg,
            r##"<line x1="{:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#1f77b4"/><circle class="point" cx="{px:.2}" cy="{py:.2}" r="4" fill="#1f77b4"/><text x="{:.2}" y="{:.2}" font-size="10">{}</text>"##,
            frame.px(p[3] - p[4]),
            frame.px(p[3] + p[4]),
            px + 6.0,
            py - 6.0,
            p[0]
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
