//! Hand-written SVG: fixed 800x500 canvas, 10-interval axes, no external assets.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const TICKS: usize = 10;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub values: Vec<f64>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn num(v: f64) -> String {
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.to_string() }
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn plot_w() -> f64 {
        WIDTH - LEFT - RIGHT
    }

    fn plot_h() -> f64 {
        HEIGHT - TOP - BOTTOM
    }

    fn x(&self, v: f64) -> f64 {
        LEFT + (v - self.x_min) / (self.x_max - self.x_min) * Self::plot_w()
    }

    fn y(&self, v: f64) -> f64 {
        TOP + Self::plot_h() - (v - self.y_min) / (self.y_max - self.y_min) * Self::plot_h()
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        num(LEFT + Frame::plot_w() / 2.0),
        escape(title)
    );
}

fn axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str, x_ticks: bool) {
    let (x0, x1, y0, y1) = (LEFT, LEFT + Frame::plot_w(), TOP, TOP + Frame::plot_h());
    let _ = writeln!(
        out,
        r#"<g class="axes" stroke="black" stroke-width="1"><line x1="{}" y1="{}" x2="{}" y2="{}"/><line x1="{}" y1="{}" x2="{}" y2="{}"/></g>"#,
        num(x0), num(y1), num(x1), num(y1), num(x0), num(y0), num(x0), num(y1)
    );
    for i in 0..=TICKS {
        let t = i as f64 / TICKS as f64;
        let yv = f.y_min + t * (f.y_max - f.y_min);
        let y = f.y(yv);
        let _ = writeln!(
            out,
            r##"<line class="tick" x1="{}" y1="{}" x2="{}" y2="{}" stroke="#ccc"/><text x="{}" y="{}" text-anchor="end">{}</text>"##,
            num(x0), num(y), num(x1), num(y), num(x0 - 6.0), num(y + 4.0), tick_label(yv)
        );
        if x_ticks {
            let xv = f.x_min + t * (f.x_max - f.x_min);
            let x = f.x(xv);
            let _ = writeln!(
                out,
                r#"<line class="tick" x1="{}" y1="{}" x2="{}" y2="{}" stroke="black"/><text x="{}" y="{}" text-anchor="middle">{}</text>"#,
                num(x), num(y1), num(x), num(y1 + 5.0), num(x), num(y1 + 18.0), tick_label(xv)
            );
        }
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        num(LEFT + Frame::plot_w() / 2.0),
        num(HEIGHT - 15.0),
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        num(TOP + Frame::plot_h() / 2.0),
        num(TOP + Frame::plot_h() / 2.0),
        escape(y_label)
    );
}

fn padded_range(lo: f64, hi: f64) -> (f64, f64) {
    if (hi - lo).abs() < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// One polyline per series over x = 0, 1, 2, ...; legend on the right.
pub fn line_chart_svg(series: &[Series], title: &str, x_label: &str, y_label: &str) -> Result<String> {
    if series.is_empty() || series.iter().any(|s| s.values.is_empty()) {
        return Err(Error::Usage("line chart needs non-empty series".into()));
    }
    let longest = series.iter().map(|s| s.values.len()).max().unwrap_or(1);
    let finite = series.iter().flat_map(|s| s.values.iter().copied()).filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return Err(Error::Usage("line chart has no finite values".into()));
    }
    let (y_min, y_max) = padded_range(lo.min(0.0), hi);
    let f = Frame {
        x_min: 0.0,
        x_max: (longest.max(2) - 1) as f64,
        y_min,
        y_max,
    };
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &f, x_label, y_label, true);
    for (i, s) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = s
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(x, &v)| format!("{},{}", num(f.x(x as f64)), num(f.y(v))))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
    }
    let _ = writeln!(out, r#"<g class="legend">"#);
    for (i, s) in series.iter().enumerate() {
        let y = TOP + 10.0 + 20.0 * i as f64;
        let x = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            out,
            r#"<g class="legend-entry"><rect x="{}" y="{}" width="14" height="4" fill="{}"/><text x="{}" y="{}">{}</text></g>"#,
            num(x), num(y - 4.0), PALETTE[i % PALETTE.len()], num(x + 20.0), num(y + 2.0), escape(&s.label)
        );
    }
    out.push_str("</g>\n</svg>\n");
    Ok(out)
}

/// One `<rect class="bar">` per entry.
pub fn histogram_svg(bars: &[(String, f64)], title: &str, x_label: &str, y_label: &str) -> Result<String> {
    if bars.is_empty() {
        return Err(Error::Usage("histogram needs at least one bar".into()));
    }
    let hi = bars.iter().map(|(_, v)| *v).fold(0.0, f64::max);
    let (y_min, y_max) = padded_range(0.0, hi);
    let f = Frame {
        x_min: 0.0,
        x_max: bars.len() as f64,
        y_min,
        y_max,
    };
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &f, x_label, y_label, false);
    let slot = Frame::plot_w() / bars.len() as f64;
    for (i, (label, v)) in bars.iter().enumerate() {
        let x = f.x(i as f64) + slot * 0.1;
        let top = f.y(*v);
        let _ = writeln!(
            out,
            r#"<rect class="bar" x="{}" y="{}" width="{}" height="{}" fill="{}"/><text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            num(x),
            num(top),
            num(slot * 0.8),
            num(f.y(0.0) - top),
            PALETTE[0],
            num(x + slot * 0.4),
            num(TOP + Frame::plot_h() + 16.0),
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn write_svg(svg: &str, path: &Path) -> Result<()> {
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}
