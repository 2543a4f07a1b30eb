//! Minimal hand-written SVG line plots: a mean curve per series with an
//! optional ±1 std band.

use std::fmt::Write as _;

use crate::{Error, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    /// Half-width of the shaded band around `mean`.
    pub std: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Tick positions at a 1/2/5 step covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let start = (lo / step).ceil() as i64;
    let end = (hi / step).floor() as i64;
    (start..=end).map(|k| k as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi - lo < 1e-12 {
        let pad = lo.abs().max(1.0) * 0.5;
        (lo - pad, hi + pad)
    } else {
        let pad = (hi - lo) * 0.05;
        (lo - pad, hi + pad)
    }
}

impl Figure {
    fn validate(&self) -> Result<()> {
        if self.series.is_empty() {
            return Err(Error::InvalidInput("figure has no series".into()));
        }
        for s in &self.series {
            if s.x.is_empty() || s.x.len() != s.mean.len() {
                return Err(Error::InvalidInput(format!("series `{}` has mismatched or empty data", s.label)));
            }
            if s.std.as_ref().is_some_and(|d| d.len() != s.x.len()) {
                return Err(Error::InvalidInput(format!("series `{}` band length differs", s.label)));
            }
            let all = s.x.iter().chain(&s.mean).chain(s.std.iter().flatten());
            if all.clone().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("series `{}` has non-finite values", s.label)));
            }
        }
        Ok(())
    }

    fn bounds(&self) -> ((f64, f64), (f64, f64)) {
        let mut xr = (f64::INFINITY, f64::NEG_INFINITY);
        let mut yr = xr;
        for s in &self.series {
            for (i, (&x, &m)) in s.x.iter().zip(&s.mean).enumerate() {
                let d = s.std.as_ref().map_or(0.0, |d| d[i]);
                xr = (xr.0.min(x), xr.1.max(x));
                yr = (yr.0.min(m - d), yr.1.max(m + d));
            }
        }
        (padded(xr.0, xr.1), padded(yr.0, yr.1))
    }

    /// Renders the figure; output depends only on the figure contents.
    pub fn to_svg(&self) -> Result<String> {
        self.validate()?;
        let ((x0, x1), (y0, y1)) = self.bounds();
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

        let mut out = String::new();
        let w = &mut out;
        // Writing to a String cannot fail.
        let _ = writeln!(
            w,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(w, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            w,
            r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        );

        let _ = writeln!(w, r#"<g class="axes" stroke="black" fill="none">"#);
        let _ = writeln!(w, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}"/>"#);
        for t in ticks(x0, x1) {
            let x = sx(t);
            let _ = writeln!(w, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}"/>"#, TOP + ph, TOP + ph + 5.0);
        }
        for t in ticks(y0, y1) {
            let y = sy(t);
            let _ = writeln!(w, r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}"/>"#, LEFT - 5.0);
        }
        let _ = writeln!(w, "</g>");

        let _ = writeln!(w, r#"<g class="tick-labels">"#);
        for t in ticks(x0, x1) {
            let _ = writeln!(
                w,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                sx(t),
                TOP + ph + 18.0,
                fmt_tick(t)
            );
        }
        for t in ticks(y0, y1) {
            let _ = writeln!(
                w,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                LEFT - 8.0,
                sy(t) + 4.0,
                fmt_tick(t)
            );
        }
        let _ = writeln!(w, "</g>");
        let _ = writeln!(
            w,
            r#"<text class="x-label" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            w,
            r#"<text class="y-label" transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );

        for (k, s) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let _ = writeln!(w, r#"<g class="series" data-label="{}">"#, escape(&s.label));
            if let Some(std) = &s.std {
                if s.x.len() > 1 {
                    let upper = s.x.iter().zip(&s.mean).zip(std).map(|((&x, &m), &d)| (x, m + d));
                    let lower = s.x.iter().zip(&s.mean).zip(std).rev().map(|((&x, &m), &d)| (x, m - d));
                    let pts: Vec<String> = upper
                        .chain(lower)
                        .map(|(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                        .collect();
                    let _ = writeln!(
                        w,
                        r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                        pts.join(" ")
                    );
                }
            }
            if s.x.len() == 1 {
                let _ = writeln!(
                    w,
                    r#"<circle class="marker" cx="{:.2}" cy="{:.2}" r="3.5" fill="{color}"/>"#,
                    sx(s.x[0]),
                    sy(s.mean[0])
                );
            } else {
                let pts: Vec<String> = s
                    .x
                    .iter()
                    .zip(&s.mean)
                    .map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                    .collect();
                let _ = writeln!(
                    w,
                    r#"<polyline class="mean" points="{}" fill="none" stroke="{color}" stroke-width="1.6"/>"#,
                    pts.join(" ")
                );
            }
            let ly = TOP + 10.0 + 20.0 * k as f64;
            let lx = WIDTH - RIGHT + 15.0;
            let _ = writeln!(
                w,
                r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="3"/>"#,
                lx + 20.0
            );
            let _ = writeln!(w, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&s.label));
            let _ = writeln!(w, "</g>");
        }
        let _ = writeln!(w, "</svg>");
        Ok(out)
    }
}
