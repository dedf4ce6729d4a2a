//! File emission: CSV (RFC 4180 via `csv`), JSON with sorted keys, SVG line charts.

use serde::Serialize;
use std::io;
use std::path::{Path, PathBuf};

/// Pretty JSON with object keys in sorted order.
pub fn json_string<T: Serialize>(v: &T) -> String {
    // serde_json's Map is a BTreeMap without `preserve_order`, so a round trip sorts keys.
    let value = serde_json::to_value(v).expect("serializable");
    let mut s = serde_json::to_string_pretty(&value).expect("serializable");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, v: &T) -> io::Result<()> {
    std::fs::write(path, json_string(v))
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()
}

/// Numeric columns of a CSV written by `write_csv`, keyed by header.
pub fn read_columns(path: &Path, names: &[&str]) -> io::Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let idx: Vec<usize> = names
        .iter()
        .map(|n| {
            header
                .iter()
                .position(|h| h == *n)
                .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, format!("missing column {n}")))
        })
        .collect::<io::Result<_>>()?;
    let mut cols = vec![Vec::new(); names.len()];
    for rec in r.records() {
        let rec = rec?;
        for (c, &i) in idx.iter().enumerate() {
            cols[c].push(rec.get(i).and_then(|s| s.parse().ok()).unwrap_or(f64::NAN));
        }
    }
    Ok(cols)
}

/// Shortest representation that parses back to the same f64.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// File-name stem for a sequence: lowercase with runs of other characters as `_`.
pub fn slug(name: &str) -> String {
    let mut s = String::new();
    for ch in name.chars() {
        if ch.is_ascii_alphanumeric() {
            s.push(ch.to_ascii_lowercase());
        } else if ch == '*' {
            s.push_str("_star");
        } else if !s.ends_with('_') {
            s.push('_');
        }
    }
    s.trim_matches('_').to_string()
}

pub fn out_path(dir: &Path, file: &str) -> PathBuf {
    dir.join(file)
}

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Default)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub series: Vec<Series>,
    /// Vertical reference lines (x, label).
    pub vlines: Vec<(f64, String)>,
    /// Horizontal reference lines (y, label).
    pub hlines: Vec<(f64, String)>,
}

const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

impl Chart {
    pub fn to_svg(&self) -> String {
        let (w, h) = (720.0, 420.0);
        let (l, r, t, b) = (70.0, 150.0, 36.0, 50.0);
        let tx = |x: f64| if self.log_x { x.log10() } else { x };
        let pts = self.series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| tx(*x).is_finite() && y.is_finite());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts {
            x0 = x0.min(tx(x));
            x1 = x1.max(tx(x));
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        for (y, _) in &self.hlines {
            y0 = y0.min(*y);
            y1 = y1.max(*y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 <= x0 {
            x1 = x0 + 1.0;
        }
        if y1 <= y0 {
            y1 = y0 + 1.0;
        }
        let pad = 0.05 * (y1 - y0);
        let (y0, y1) = (y0 - pad, y1 + pad);
        let px = |x: f64| l + (tx(x) - x0) / (x1 - x0) * (w - l - r);
        let py = |y: f64| h - b - (y - y0) / (y1 - y0) * (h - t - b);
        let mut s = format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
        );
        s += &format!("<rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n");
        s += &format!("<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n", (l + w - r) / 2.0, esc(&self.title));
        s += &format!(
            "<rect x=\"{l}\" y=\"{t}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
            w - l - r,
            h - t - b
        );
        for k in 0..=4 {
            let fx = x0 + (x1 - x0) * k as f64 / 4.0;
            let xv = if self.log_x { 10f64.powf(fx) } else { fx };
            let yv = y0 + (y1 - y0) * k as f64 / 4.0;
            s += &format!("<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", px(xv), h - b + 16.0, tick(xv));
            s += &format!("<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>\n", l - 6.0, py(yv) + 4.0, tick(yv));
        }
        s += &format!("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", (l + w - r) / 2.0, h - 12.0, esc(&self.x_label));
        s += &format!(
            "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
            (t + h - b) / 2.0,
            (t + h - b) / 2.0,
            esc(&self.y_label)
        );
        for (x, label) in &self.vlines {
            if tx(*x).is_finite() && tx(*x) >= x0 && tx(*x) <= x1 {
                let xp = px(*x);
                s += &format!("<line x1=\"{xp:.1}\" y1=\"{t}\" x2=\"{xp:.1}\" y2=\"{}\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n", h - b);
                s += &format!("<text x=\"{:.1}\" y=\"{}\" font-size=\"10\">{}</text>\n", xp + 2.0, t + 12.0, esc(label));
            }
        }
        for (y, label) in &self.hlines {
            let yp = py(*y);
            s += &format!("<line x1=\"{l}\" y1=\"{yp:.1}\" x2=\"{}\" y2=\"{yp:.1}\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n", w - r);
            s += &format!("<text x=\"{}\" y=\"{:.1}\" font-size=\"10\">{}</text>\n", w - r + 4.0, yp + 4.0, esc(label));
        }
        for (k, ser) in self.series.iter().enumerate() {
            let c = COLORS[k % COLORS.len()];
            let path: Vec<String> = ser
                .points
                .iter()
                .filter(|(x, y)| tx(*x).is_finite() && y.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            s += &format!("<polyline fill=\"none\" stroke=\"{c}\" stroke-width=\"1.2\" points=\"{}\"/>\n", path.join(" "));
            let ly = t + 16.0 * (k as f64 + 2.0);
            s += &format!("<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{c}\" stroke-width=\"2\"/>\n", w - r + 6.0, w - r + 24.0);
            s += &format!("<text x=\"{}\" y=\"{}\">{}</text>\n", w - r + 28.0, ly + 4.0, esc(&ser.label));
        }
        s += "</svg>\n";
        s
    }
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}
