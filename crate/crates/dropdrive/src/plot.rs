//! SVG charts of ROC curves and uncertainty traces.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use dropdrive_core::monitor::TraceRow;
use dropdrive_core::uncertainty::Measure;

use crate::error::{Error, IoContext, Result};
use crate::json::ensure_parent;
use crate::report::{read_roc_points, ROC_HEADER};
use crate::trace::{read_trace_rows, TRACE_HEADER};

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#17becf"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvKind {
    Roc,
    Trace,
}

pub fn detect_kind(path: &Path) -> Result<CsvKind> {
    let mut r = csv::Reader::from_path(path).at(path)?;
    let header = r.headers().at(path)?.clone();
    if header.iter().eq(ROC_HEADER) {
        Ok(CsvKind::Roc)
    } else if header.iter().eq(TRACE_HEADER) {
        Ok(CsvKind::Trace)
    } else {
        Err(Error::format(path, "neither a ROC nor a trace CSV"))
    }
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        MARGIN + (v - self.x0) / (self.x1 - self.x0) * (W - 2.0 * MARGIN)
    }
    fn y(&self, v: f64) -> f64 {
        H - MARGIN - (v - self.y0) / (self.y1 - self.y0) * (H - 2.0 * MARGIN)
    }
}

fn open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, escape(title));
    s
}

fn axes(s: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    );
    for k in 0..=4 {
        let xv = f.x0 + (f.x1 - f.x0) * k as f64 / 4.0;
        let yv = f.y0 + (f.y1 - f.y0) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            f.x(xv),
            H - MARGIN + 16.0,
            tick(xv)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            MARGIN - 6.0,
            f.y(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, W / 2.0, H - 14.0, escape(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
}

fn tick(v: f64) -> String {
    let r = (v * 100.0).round() / 100.0;
    if r == r.trunc() {
        format!("{}", r as i64)
    } else {
        format!("{r}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn polyline(s: &mut String, pts: &[(f64, f64)], color: &str) {
    let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    let _ = writeln!(
        s,
        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
        coords.join(" ")
    );
}

fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

/// One chart with a curve per ROC CSV.
pub fn roc_svg(inputs: &[&Path]) -> Result<String> {
    let f = Frame {
        x0: 0.0,
        x1: 1.0,
        y0: 0.0,
        y1: 1.0,
    };
    let mut s = open("ROC");
    axes(&mut s, &f, "false positive rate", "true positive rate");
    let _ = writeln!(
        s,
        r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#999" stroke-dasharray="4 4"/>"##,
        f.x(0.0),
        f.y(0.0),
        f.x(1.0),
        f.y(1.0)
    );
    for (k, path) in inputs.iter().enumerate() {
        let pts = read_roc_points(path)?;
        if pts.is_empty() {
            return Err(Error::format(*path, "no ROC points"));
        }
        let raw: Vec<(f64, f64)> = pts.iter().map(|p| (p.fpr, p.tpr)).collect();
        let auc = trapezoid(&raw);
        let color = COLORS[k % COLORS.len()];
        let mapped: Vec<(f64, f64)> = raw.iter().map(|&(x, y)| (f.x(x), f.y(y))).collect();
        polyline(&mut s, &mapped, color);
        let name = path.file_stem().and_then(|n| n.to_str()).unwrap_or("roc");
        let ly = MARGIN + 18.0 + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{ly:.2}" fill="{color}" text-anchor="end">{} (AUC {auc:.3})</text>"#,
            W - MARGIN - 8.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn trace_measure(rows: &[TraceRow], requested: Option<Measure>) -> Option<Measure> {
    let present = |m: Measure| rows.iter().all(|r| r.measures.get(m).is_some());
    match requested {
        Some(m) => present(m).then_some(m),
        None => [Measure::MutualInformation, Measure::Variance].into_iter().find(|&m| present(m)),
    }
}

/// Measure against frame with dashed red lines at crash frames and an
/// optional horizontal threshold.
pub fn trace_svg(path: &Path, measure: Option<Measure>, threshold: Option<f64>) -> Result<String> {
    let rows = read_trace_rows(path)?;
    if rows.is_empty() {
        return Err(Error::format(path, "trace has no rows"));
    }
    let m = trace_measure(&rows, measure).ok_or_else(|| Error::format(path, "requested measure column is empty"))?;
    let vals: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.frame as f64, r.measures.get(m).unwrap_or(0.0)))
        .collect();
    let (mut lo, mut hi) = vals
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &(_, v)| (a.min(v), b.max(v)));
    if let Some(t) = threshold.filter(|t| t.is_finite()) {
        lo = lo.min(t);
        hi = hi.max(t);
    }
    if hi <= lo {
        hi = lo + 1.0;
    }
    let x0 = vals[0].0;
    let mut x1 = vals[vals.len() - 1].0;
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    let f = Frame { x0, x1, y0: lo, y1: hi };
    let mut s = open(&format!("{} per frame", m.name()));
    axes(&mut s, &f, "frame", m.name());
    for r in rows.iter().filter(|r| r.crashed) {
        let x = f.x(r.frame as f64);
        let _ = writeln!(
            s,
            r#"<line class="crash" x1="{x:.2}" y1="{MARGIN}" x2="{x:.2}" y2="{:.2}" stroke="red" stroke-dasharray="6 4"/>"#,
            H - MARGIN
        );
    }
    if let Some(t) = threshold.filter(|t| t.is_finite()) {
        let y = f.y(t);
        let _ = writeln!(
            s,
            r##"<line class="threshold" x1="{MARGIN}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#555" stroke-dasharray="2 3"/>"##,
            W - MARGIN
        );
    }
    let mapped: Vec<(f64, f64)> = vals.iter().map(|&(x, y)| (f.x(x), f.y(y))).collect();
    polyline(&mut s, &mapped, COLORS[0]);
    s.push_str("</svg>\n");
    Ok(s)
}

/// Renders `inputs` to `out`. Several inputs are only allowed for ROC CSVs.
pub fn plot(inputs: &[&Path], out: &Path, measure: Option<Measure>, threshold: Option<f64>) -> Result<()> {
    let Some(first) = inputs.first() else {
        return Err(Error::Usage("plot needs at least one input".into()));
    };
    let svg = match detect_kind(first)? {
        CsvKind::Roc => {
            for p in &inputs[1..] {
                if detect_kind(p)? != CsvKind::Roc {
                    return Err(Error::format(*p, "cannot mix ROC and trace inputs"));
                }
            }
            roc_svg(inputs)?
        }
        CsvKind::Trace if inputs.len() == 1 => trace_svg(first, measure, threshold)?,
        CsvKind::Trace => return Err(Error::Usage("plot one trace at a time".into())),
    };
    ensure_parent(out)?;
    fs::write(out, svg).at(out)
}
