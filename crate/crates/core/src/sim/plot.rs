//! Minimal SVG line charts, written by hand so the output is byte-stable.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::log::RunLog;
use super::SimError;

const PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79",
    "#ad494a",
];
const MAX_POINTS: usize = 1500;

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub color: Option<String>,
    pub dashed: bool,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self { name: name.into(), points, color: None, dashed: false }
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }

    pub fn color(mut self, c: &str) -> Self {
        self.color = Some(c.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub log_y: bool,
    /// Same data scale on both axes (trajectory plots).
    pub equal_aspect: bool,
}

fn nice_step(span: f64, target: usize) -> f64 {
    let raw = span / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let r = raw / mag;
    let m = if r <= 1.0 {
        1.0
    } else if r <= 2.0 {
        2.0
    } else if r <= 5.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e4).contains(&a) {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
    log_y: bool,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        self.x0 + (x - self.xmin) / (self.xmax - self.xmin) * self.w
    }

    fn py(&self, y: f64) -> f64 {
        let v = if self.log_y { y.max(10f64.powf(self.ymin)).log10() } else { y };
        self.y0 + self.h - (v - self.ymin) / (self.ymax - self.ymin) * self.h
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo > hi {
        return None;
    }
    if hi - lo < 1e-12 * hi.abs().max(1.0) {
        let pad = 0.5 * hi.abs().max(1.0);
        return Some((lo - pad, hi + pad));
    }
    Some((lo, hi))
}

fn thin(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    if points.len() <= MAX_POINTS {
        return points.to_vec();
    }
    let stride = points.len().div_ceil(MAX_POINTS);
    let mut out: Vec<(f64, f64)> = points.iter().step_by(stride).copied().collect();
    if let Some(&last) = points.last() {
        if out.last() != Some(&last) {
            out.push(last);
        }
    }
    out
}

impl Chart {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self { title: title.into(), x_label: x_label.into(), y_label: y_label.into(), ..Default::default() }
    }

    fn frame(&self, x0: f64, y0: f64, w: f64, h: f64) -> Frame {
        let xs = self.series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
        let (mut xmin, mut xmax) = bounds(xs).unwrap_or((0.0, 1.0));
        let (mut ymin, mut ymax) = if self.log_y {
            let ys = self.series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).filter(|&v| v > 0.0);
            let (lo, hi) = bounds(ys.map(f64::log10)).unwrap_or((-1.0, 0.0));
            (lo.floor(), hi.ceil().max(lo.floor() + 1.0))
        } else {
            bounds(self.series.iter().flat_map(|s| s.points.iter().map(|p| p.1))).unwrap_or((0.0, 1.0))
        };
        if self.equal_aspect && !self.log_y {
            let (cx, cy) = (0.5 * (xmin + xmax), 0.5 * (ymin + ymax));
            let scale = ((xmax - xmin) / w).max((ymax - ymin) / h) * 1.05;
            xmin = cx - 0.5 * scale * w;
            xmax = cx + 0.5 * scale * w;
            ymin = cy - 0.5 * scale * h;
            ymax = cy + 0.5 * scale * h;
        }
        Frame { x0, y0, w, h, xmin, xmax, ymin, ymax, log_y: self.log_y }
    }

    /// Draws the chart inside the box `(x, y, width, height)`.
    fn render(&self, out: &mut String, x: f64, y: f64, width: f64, height: f64) {
        let (ml, mr, mt, mb) = (70.0, 150.0, 34.0, 48.0);
        let f = self.frame(x + ml, y + mt, width - ml - mr, height - mt - mb);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="15" text-anchor="middle">{}</text>"#,
            f.x0 + f.w / 2.0,
            y + 20.0,
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#333"/>"##,
            f.x0, f.y0, f.w, f.h
        );

        let step = nice_step(f.xmax - f.xmin, 6);
        let mut v = (f.xmin / step).ceil() * step;
        while v <= f.xmax + 1e-9 * step {
            let px = f.px(v);
            let _ = writeln!(out, r##"<line x1="{px:.1}" y1="{:.1}" x2="{px:.1}" y2="{:.1}" stroke="#ddd"/>"##, f.y0, f.y0 + f.h);
            let _ = writeln!(
                out,
                r#"<text x="{px:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"#,
                f.y0 + f.h + 15.0,
                fmt_tick(v)
            );
            v += step;
        }
        let yticks: Vec<(f64, String)> = if f.log_y {
            let (lo, hi) = (f.ymin as i32, f.ymax as i32);
            let every = ((hi - lo) / 6).max(1);
            (lo..=hi).filter(|e| (e - lo) % every == 0).map(|e| (10f64.powi(e), format!("1e{e}"))).collect()
        } else {
            let step = nice_step(f.ymax - f.ymin, 5);
            let mut v = (f.ymin / step).ceil() * step;
            let mut t = Vec::new();
            while v <= f.ymax + 1e-9 * step {
                t.push((v, fmt_tick(v)));
                v += step;
            }
            t
        };
        for (v, label) in yticks {
            let py = f.py(v);
            let _ = writeln!(out, r##"<line x1="{:.1}" y1="{py:.1}" x2="{:.1}" y2="{py:.1}" stroke="#ddd"/>"##, f.x0, f.x0 + f.w);
            let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{label}</text>"#, f.x0 - 5.0, py + 4.0);
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{}</text>"#,
            f.x0 + f.w / 2.0,
            f.y0 + f.h + 36.0,
            escape(&self.x_label)
        );
        let (lx, ly) = (x + 16.0, f.y0 + f.h / 2.0);
        let _ = writeln!(
            out,
            r#"<text x="{lx:.1}" y="{ly:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 {lx:.1} {ly:.1})">{}</text>"#,
            escape(&self.y_label)
        );

        let _ = writeln!(
            out,
            r#"<clipPath id="c{:.0}_{:.0}"><rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}"/></clipPath>"#,
            x, y, f.x0, f.y0, f.w, f.h
        );
        for (k, s) in self.series.iter().enumerate() {
            let color = s.color.clone().unwrap_or_else(|| PALETTE[k % PALETTE.len()].to_string());
            let mut d = String::new();
            for (n, &(px, py)) in thin(&s.points).iter().enumerate() {
                if !(px.is_finite() && py.is_finite()) || (f.log_y && py <= 0.0) {
                    continue;
                }
                let _ = write!(d, "{}{:.2},{:.2}", if n == 0 || d.is_empty() { "M" } else { " L" }, f.px(px), f.py(py));
            }
            let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let _ = writeln!(
                out,
                r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.4"{dash} clip-path="url(#c{:.0}_{:.0})"/>"#,
                x, y
            );
            let ly = f.y0 + 10.0 + 15.0 * k as f64;
            let lx = f.x0 + f.w + 10.0;
            let _ = writeln!(out, r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"{dash}/>"#, lx + 22.0);
            let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-size="11">{}</text>"#, lx + 27.0, ly + 4.0, escape(&s.name));
        }
    }

    pub fn to_svg(&self, width: f64, height: f64) -> String {
        stacked_svg(std::slice::from_ref(self), width, height)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Several charts stacked vertically in one document, each `width × height`.
pub fn stacked_svg(charts: &[Chart], width: f64, height: f64) -> String {
    let total = height * charts.len() as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{total:.0}" viewBox="0 0 {width:.0} {total:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (k, c) in charts.iter().enumerate() {
        c.render(&mut out, 0.0, height * k as f64, width, height);
    }
    out.push_str("</svg>\n");
    out
}

pub fn trajectory_chart(log: &RunLog, title: &str) -> Chart {
    let mut c = Chart::new(title, "x (m)", "y (m)");
    c.equal_aspect = true;
    c.series.push(Series::new("navigator", log.rows.iter().map(|r| (r.nav.y.x, r.nav.y.y)).collect()).color("#000000").dashed());
    for i in 0..log.m {
        c.series.push(Series::new(format!("vehicle {}", i + 1), log.rows.iter().map(|r| (r.states[i].px, r.states[i].py)).collect()));
    }
    c
}

pub fn error_chart(log: &RunLog, title: &str) -> Chart {
    let mut c = Chart::new(title, "t (s)", "error (m)");
    c.log_y = true;
    c.series.push(Series::new("e~ (to navigator)", log.rows.iter().map(|r| (r.t, r.e_tilde)).collect()));
    c.series.push(Series::new("eps~ (to reference)", log.rows.iter().map(|r| (r.t, r.eps_tilde)).collect()).dashed());
    c
}

/// Writes `trajectories.svg` and `errors.svg` for one run.
pub fn plot_log(log: &RunLog, dir: &Path) -> Result<Vec<PathBuf>, SimError> {
    std::fs::create_dir_all(dir)?;
    let traj = dir.join("trajectories.svg");
    std::fs::write(&traj, trajectory_chart(log, "Trajectories").to_svg(760.0, 620.0))?;
    let err = dir.join("errors.svg");
    std::fs::write(&err, error_chart(log, "Tracking errors").to_svg(760.0, 420.0))?;
    Ok(vec![traj, err])
}
