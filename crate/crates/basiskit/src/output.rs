//! Run records as CSV and convergence charts as SVG.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};

pub const CSV_HEADER: [&str; 6] = ["round", "fgap", "dist", "up_bits", "down_bits", "wall_ms"];

/// Metrics after `round` rounds; bits are cumulative per node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub round: u64,
    pub fgap: f64,
    pub dist: f64,
    pub up_bits: f64,
    pub down_bits: f64,
    pub wall_ms: f64,
}

impl RunRecord {
    pub fn bits(&self, count_download: bool) -> f64 {
        if count_download {
            self.up_bits + self.down_bits
        } else {
            self.up_bits
        }
    }
}

pub fn csv_string(records: &[RunRecord]) -> Result<String> {
    if records.is_empty() {
        return Err(DataError::Csv {
            path: "<memory>".into(),
            message: "no records".into(),
        }
        .into());
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r).map_err(csv_err("<memory>"))?;
    }
    let bytes = w.into_inner().map_err(|e| csv_err("<memory>")(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn csv_err<E: std::fmt::Display>(path: &str) -> impl Fn(E) -> crate::error::Error + '_ {
    move |e| {
        DataError::Csv {
            path: path.into(),
            message: e.to_string(),
        }
        .into()
    }
}

pub fn write_csv(path: &Path, records: &[RunRecord]) -> Result<()> {
    let text = csv_string(records)?;
    std::fs::write(path, text).map_err(|e| DataError::io(path, e).into())
}

pub fn parse_csv(text: &str, origin: &str) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(csv_err(origin))?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(DataError::Csv {
            path: origin.into(),
            message: format!("expected header {:?}, found {:?}", CSV_HEADER.join(","), header.iter().collect::<Vec<_>>().join(",")),
        }
        .into());
    }
    let records = r
        .deserialize()
        .collect::<std::result::Result<Vec<RunRecord>, _>>()
        .map_err(csv_err(origin))?;
    if records.is_empty() {
        return Err(DataError::Csv {
            path: origin.into(),
            message: "no records".into(),
        }
        .into());
    }
    Ok(records)
}

pub fn read_csv(path: &Path) -> Result<Vec<RunRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    parse_csv(&text, &path.display().to_string())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    /// `(bits per node, f gap)`.
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn from_records(name: impl Into<String>, records: &[RunRecord], count_download: bool) -> Self {
        Series {
            name: name.into(),
            points: records.iter().map(|r| (r.bits(count_download), r.fgap)).collect(),
        }
    }
}

/// Gaps below this are drawn on the floor of the chart.
const GAP_FLOOR: f64 = 1e-16;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Log-scale f gap against bits per node, one polyline per series.
pub fn svg_chart(series: &[Series], x_label: &str) -> Result<String> {
    if series.is_empty() || series.iter().any(|s| s.points.is_empty()) {
        return Err(DataError::Csv {
            path: "<chart>".into(),
            message: "every series needs at least one point".into(),
        }
        .into());
    }
    let (w, h, left, right, top, bottom) = (720.0, 480.0, 80.0, 180.0, 20.0, 60.0);
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x_min, mut x_max, mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        let ly = y.max(GAP_FLOOR).log10();
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(ly);
        y_max = y_max.max(ly);
    }
    let y_lo = y_min.floor();
    let y_hi = y_max.ceil().max(y_lo + 1.0);
    if x_max <= x_min {
        x_max = x_min + 1.0;
    }
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |x: f64| left + (x - x_min) / (x_max - x_min) * pw;
    let sy = |ly: f64| top + (y_hi - ly) / (y_hi - y_lo) * ph;

    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(out, r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    let mut e = y_lo as i64;
    let step = (((y_hi - y_lo) / 8.0).ceil() as i64).max(1);
    while e as f64 <= y_hi {
        let y = sy(e as f64);
        let _ = writeln!(out, r##"<line x1="{left}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##, left + pw);
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="end">1e{e}</text>"#, left - 6.0, y + 4.0);
        e += step;
    }
    for t in 0..=4 {
        let x = x_min + (x_max - x_min) * t as f64 / 4.0;
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{x:.3e}</text>"#, sx(x), top + ph + 18.0);
    }
    let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" font-size="13" text-anchor="middle">{}</text>"#, left + pw / 2.0, h - 15.0, escape(x_label));
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.2}" font-size="13" text-anchor="middle" transform="rotate(-90 18 {:.2})">f(x) - f*</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let coords: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y.max(GAP_FLOOR).log10())))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"><title>{}</title></polyline>"#,
            coords.join(" "),
            escape(&s.name)
        );
        let ly = top + 16.0 + 20.0 * k as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(out, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="12">{}</text>"#, lx + 26.0, ly + 4.0, escape(&s.name));
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn write_svg(path: &Path, series: &[Series], x_label: &str) -> Result<()> {
    let text = svg_chart(series, x_label)?;
    std::fs::write(path, text).map_err(|e| DataError::io(path, e).into())
}
