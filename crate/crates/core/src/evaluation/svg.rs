//! BER-versus-rate line charts as standalone SVG 1.1.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::csv::{Row, RowLevel};
use super::EvalReport;
use crate::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    /// `(rate, ber)`, drawn in the given order.
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

fn snr_label(snr: f64) -> String {
    if snr.is_infinite() {
        "noiseless".into()
    } else {
        format!("SNR {snr} dB")
    }
}

/// One series per SNR of aggregate BER against rate.
pub fn series_from_reports(reports: &[EvalReport]) -> Vec<Series> {
    let mut by_snr: BTreeMap<u64, (f64, Vec<(f64, f64)>)> = BTreeMap::new();
    for r in reports {
        by_snr
            .entry(ordered_key(r.snr_db))
            .or_insert_with(|| (r.snr_db, Vec::new()))
            .1
            .push((r.rate, r.aggregate_ber));
    }
    by_snr
        .into_values()
        .map(|(snr, mut points)| {
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series {
                label: snr_label(snr),
                points,
                dashed: false,
            }
        })
        .collect()
}

/// Aggregate rows of an external CSV, one dashed series per SNR.
pub fn series_from_rows(rows: &[Row], name: &str) -> Vec<Series> {
    let mut by_snr: BTreeMap<u64, (f64, Vec<(f64, f64)>)> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.level == RowLevel::Aggregate) {
        by_snr
            .entry(ordered_key(r.snr_db))
            .or_insert_with(|| (r.snr_db, Vec::new()))
            .1
            .push((r.rate, r.ber));
    }
    by_snr
        .into_values()
        .map(|(snr, mut points)| {
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series {
                label: format!("{name}, {}", snr_label(snr)),
                points,
                dashed: true,
            }
        })
        .collect()
}

/// Maps an `f64` to a `u64` with the same total order.
fn ordered_key(v: f64) -> u64 {
    let b = v.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | 1 << 63
    }
}

/// Decade range `[10^lo, 10^hi]` of the y axis. Zero BERs are drawn on the
/// bottom edge.
pub fn y_decades(series: &[Series]) -> (i32, i32) {
    let min_pos = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1))
        .filter(|&y| y > 0.0)
        .fold(f64::INFINITY, f64::min);
    let lo = if min_pos.is_finite() {
        (min_pos.log10().floor() as i32).min(-1)
    } else {
        -6
    };
    (lo, 0)
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn render_svg(series: &[Series]) -> Result<String> {
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    if all.is_empty() {
        return Err(Error::Config("nothing to plot".into()));
    }
    let (mut x0, mut x1) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    if x1 - x0 < 1e-12 {
        x0 -= 0.25;
        x1 += 0.25;
    }
    let (lo, hi) = y_decades(series);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| {
        let l = if y > 0.0 { y.log10().max(lo as f64) } else { lo as f64 };
        TOP + (hi as f64 - l) / (hi - lo) as f64 * ph
    };

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for d in lo..=hi {
        let y = py(10f64.powi(d));
        let _ = writeln!(
            s,
            "<line class=\"ytick\" x1=\"{LEFT}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#ddd\"/>",
            LEFT + pw
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{d}</text>"#,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let mut rates: Vec<f64> = all.iter().map(|p| p.0).collect();
    rates.sort_by(f64::total_cmp);
    rates.dedup();
    for r in &rates {
        let x = px(*r);
        let _ = writeln!(
            s,
            "<line class=\"xtick\" x1=\"{x:.2}\" y1=\"{TOP}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#eee\"/>",
            TOP + ph
        );
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{r}</text>"#,
            TOP + ph + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">rate (bits per channel use)</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">BER</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let dash = if ser.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let pts: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
            pts.join(" ")
        );
        for &(x, y) in &ser.points {
            let fill = if y > 0.0 { color } else { "white" };
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{fill}" stroke="{color}"/>"#,
                px(x),
                py(y)
            );
        }
        let ly = TOP + 14.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="1.5"{dash}/>"#,
            lx + 20.0
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 26.0, ly + 4.0, esc(&ser.label));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn write_svg(series: &[Series], path: &Path) -> Result<()> {
    Ok(crate::write_atomic(path, render_svg(series)?.as_bytes())?)
}
