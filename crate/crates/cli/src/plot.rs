//! Scatter plots with an optional fitted curve, as standalone SVG.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{ensure, Context, Result};
use nightlights::numfmt::sig;
use nightlights::regress::RegressionFit;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
pub const CURVE_SEGMENTS: usize = 200;
const TICKS: usize = 5;

#[derive(Debug, Clone, Default)]
pub struct Labels {
    pub title: String,
    pub x: String,
    pub y: String,
}

/// A fitted model drawn against calendar years.
#[derive(Debug, Clone, Copy)]
pub struct Curve<'a> {
    pub fit: &'a RegressionFit,
    pub x_offset: i32,
    pub x_scale: f64,
}

impl Curve<'_> {
    pub fn at(&self, year: f64) -> f64 {
        self.fit.predict((year - self.x_offset as f64) / self.x_scale)
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c if (c as u32) < 0x20 && c != '\t' && c != '\n' => {}
            c => out.push(c),
        }
    }
    out
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// SVG text for `points` as markers and, when given, the curve sampled at
/// 201 evenly spaced x over the data range.
pub fn render_svg(points: &[(f64, f64)], curve: Option<Curve<'_>>, labels: &Labels) -> Result<String> {
    ensure!(!points.is_empty(), "plot needs at least one point");
    ensure!(points.iter().all(|p| p.0.is_finite() && p.1.is_finite()), "plot points must be finite");
    let x_lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let x_hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let samples: Vec<(f64, f64)> = match curve {
        Some(c) => (0..=CURVE_SEGMENTS)
            .map(|i| {
                let x = if x_hi > x_lo { x_lo + (x_hi - x_lo) * i as f64 / CURVE_SEGMENTS as f64 } else { x_lo };
                (x, c.at(x))
            })
            .filter(|p| p.1.is_finite())
            .collect(),
        None => Vec::new(),
    };
    let ys = points.iter().chain(&samples).map(|p| p.1);
    let y_lo = ys.clone().fold(f64::INFINITY, f64::min);
    let y_hi = ys.fold(f64::NEG_INFINITY, f64::max);
    let (x0, x1) = padded(x_lo, x_hi);
    let (y0, y1) = padded(y_lo, y_hi);
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(&labels.title)
    );
    let (bx, by) = (LEFT, TOP + ph);
    let _ = writeln!(s, r#"<g stroke="black" stroke-width="1">"#);
    let _ = writeln!(s, r#"<line x1="{bx:.2}" y1="{by:.2}" x2="{:.2}" y2="{by:.2}"/>"#, LEFT + pw);
    let _ = writeln!(s, r#"<line x1="{bx:.2}" y1="{by:.2}" x2="{bx:.2}" y2="{TOP:.2}"/>"#);
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g font-size="11" fill="black">"#);
    for i in 0..=TICKS {
        let f = i as f64 / TICKS as f64;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, sx(xv), by + 16.0, sig(xv, 5));
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, sy(yv) + 4.0, sig(yv, 4));
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 10.0,
        escape(&labels.x)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" font-size="12" transform="rotate(-90 16 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&labels.y)
    );
    let _ = writeln!(s, r#"<g class="points" fill="steelblue">"#);
    for &(x, y) in points {
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3"/>"#, sx(x), sy(y));
    }
    let _ = writeln!(s, "</g>");
    if !samples.is_empty() {
        let coords: Vec<String> = samples.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="fit" fill="none" stroke="firebrick" stroke-width="1.5" points="{}"/>"#,
            coords.join(" ")
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_plot(points: &[(f64, f64)], curve: Option<Curve<'_>>, labels: &Labels, path: &Path) -> Result<()> {
    let svg = render_svg(points, curve, labels)?;
    fs::write(path, svg).with_context(|| format!("writing {}", path.display()))
}
