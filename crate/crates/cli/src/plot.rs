//! Minimal standalone SVG charts.

use std::fmt::Write;

const W: f64 = 720.0;
const H: f64 = 480.0;
const ML: f64 = 80.0;
const MR: f64 = 160.0;
const MT: f64 = 40.0;
const MB: f64 = 60.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

pub fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub color: String,
    pub dashed: bool,
    pub markers: bool,
}

impl Series {
    pub fn line(label: impl Into<String>, points: Vec<(f64, f64)>, idx: usize) -> Self {
        Self {
            label: label.into(),
            points,
            color: color(idx).to_string(),
            dashed: false,
            markers: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn header(out: &mut String, title: &str, meta: &[(&str, String)]) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    out.push_str("<metadata>");
    for (k, v) in meta {
        let _ = write!(out, "<{k}>{}</{k}>", escape(v));
    }
    out.push_str("</metadata>\n");
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        (ML + W - MR) / 2.0,
        escape(title)
    );
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite() && (!log || *v > 0.0)) {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        if log {
            lo = lo.floor();
            hi = hi.ceil();
        }
        Self { lo, hi, log }
    }

    fn frac(&self, v: f64) -> Option<f64> {
        if self.log && v <= 0.0 || !v.is_finite() {
            return None;
        }
        let v = if self.log { v.log10() } else { v };
        Some((v - self.lo) / (self.hi - self.lo))
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let step = ((self.hi - self.lo) / 8.0).ceil().max(1.0) as i64;
            (self.lo as i64..=self.hi as i64)
                .step_by(step as usize)
                .map(|e| ((e as f64 - self.lo) / (self.hi - self.lo), format!("1e{e}")))
                .collect()
        } else {
            (0..=5)
                .map(|j| {
                    let f = j as f64 / 5.0;
                    (f, format!("{:.3}", self.lo + f * (self.hi - self.lo)))
                })
                .collect()
        }
    }
}

pub fn render(chart: &Chart, meta: &[(&str, String)]) -> String {
    let mut out = String::new();
    header(&mut out, &chart.title, meta);
    let all = || chart.series.iter().flat_map(|s| s.points.iter());
    let xa = Axis::new(all().map(|p| p.0), chart.log_x);
    let ya = Axis::new(all().map(|p| p.1), chart.log_y);
    let pw = W - ML - MR;
    let ph = H - MT - MB;
    let px = |f: f64| ML + f * pw;
    let py = |f: f64| MT + (1.0 - f) * ph;
    let _ = writeln!(
        out,
        r##"<rect x="{ML}" y="{MT}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##
    );
    for (f, label) in xa.ticks() {
        let x = px(f);
        let _ = writeln!(
            out,
            r##"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="#ddd"/><text x="{x}" y="{}" text-anchor="middle">{label}</text>"##,
            MT,
            MT + ph,
            MT + ph + 16.0
        );
    }
    for (f, label) in ya.ticks() {
        let y = py(f);
        let _ = writeln!(
            out,
            r##"<line x1="{ML}" y1="{y}" x2="{}" y2="{y}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end">{label}</text>"##,
            ML + pw,
            ML - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        ML + pw / 2.0,
        H - 16.0,
        escape(&chart.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        MT + ph / 2.0,
        MT + ph / 2.0,
        escape(&chart.y_label)
    );
    for (i, s) in chart.series.iter().enumerate() {
        let coords: Vec<(f64, f64)> = s
            .points
            .iter()
            .filter_map(|&(x, y)| Some((px(xa.frac(x)?), py(ya.frac(y)?))))
            .collect();
        if s.markers {
            for (x, y) in &coords {
                let _ = writeln!(
                    out,
                    r#"<circle cx="{x:.2}" cy="{y:.2}" r="3.5" fill="{}"/>"#,
                    s.color
                );
            }
        } else if !coords.is_empty() {
            let path: Vec<String> = coords
                .iter()
                .map(|(x, y)| format!("{x:.2},{y:.2}"))
                .collect();
            let dash = if s.dashed {
                r#" stroke-dasharray="6 4""#
            } else {
                ""
            };
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.6"{dash}/>"#,
                path.join(" "),
                s.color
            );
        }
        if !s.label.is_empty() && i < 24 {
            let y = MT + 14.0 + 16.0 * i as f64;
            let x = ML + pw + 12.0;
            let _ = writeln!(
                out,
                r#"<line x1="{x}" y1="{}" x2="{}" y2="{}" stroke="{}" stroke-width="2"/><text x="{}" y="{y}">{}</text>"#,
                y - 4.0,
                x + 18.0,
                y - 4.0,
                s.color,
                x + 24.0,
                escape(&s.label)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Heatmap of `|m|` with a white-to-blue scale; rows top to bottom.
pub fn heatmap(title: &str, m: &[Vec<f64>], meta: &[(&str, String)]) -> String {
    let mut out = String::new();
    header(&mut out, title, meta);
    let rows = m.len().max(1);
    let cols = m.iter().map(Vec::len).max().unwrap_or(1).max(1);
    let side = (H - MT - MB).min(W - ML - MR);
    let (cw, ch) = (side / cols as f64, side / rows as f64);
    let vmax = m
        .iter()
        .flatten()
        .map(|v| v.abs())
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    for (r, row) in m.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            let s = (v.abs() / vmax).sqrt();
            let shade = (255.0 * (1.0 - s)).round() as u8;
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="rgb({shade},{shade},255)"/>"#,
                ML + c as f64 * cw,
                MT + r as f64 * ch,
                cw + 0.05,
                ch + 0.05
            );
        }
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}">max |B| = {vmax:.3e}</text>"#,
        ML + side + 12.0,
        MT + 14.0
    );
    out.push_str("</svg>\n");
    out
}

/// Block-average a matrix down to at most `max_side` rows and columns.
pub fn downsample(m: &[Vec<f64>], max_side: usize) -> Vec<Vec<f64>> {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    let fr = rows.div_ceil(max_side).max(1);
    let fc = cols.div_ceil(max_side).max(1);
    (0..rows.div_ceil(fr))
        .map(|br| {
            (0..cols.div_ceil(fc))
                .map(|bc| {
                    let mut sum = 0.0;
                    let mut count = 0.0;
                    for row in m.iter().skip(br * fr).take(fr) {
                        for v in row.iter().skip(bc * fc).take(fc) {
                            sum += v.abs();
                            count += 1.0;
                        }
                    }
                    sum / count
                })
                .collect()
        })
        .collect()
}
