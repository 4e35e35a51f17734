//! Minimal static SVG charts: line/marker plots and a diverging heatmap.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Style {
    Line,
    Markers,
}

#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub style: Style,
}

#[derive(Clone, Debug)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Plot x on a log10 axis (non-positive x are dropped).
    pub log_x: bool,
    pub series: Vec<Series>,
}

/// A rectangle `[x0, x1] × [y0, y1]` colored by `value`.
#[derive(Clone, Copy, Debug)]
pub struct Cell {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub value: f64,
}

#[derive(Clone, Debug)]
pub struct Heatmap {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub cells: Vec<Cell>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = if lo.abs() > 0.0 { 0.05 * lo.abs() } else { 1.0 };
        return (lo - pad, hi + pad);
    }
    let pad = 0.04 * (hi - lo);
    (lo - pad, hi + pad)
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e4).contains(&a) {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }
    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }
}

fn open(out: &mut String, title: &str, x_label: &str, y_label: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, (LEFT + W - RIGHT) / 2.0, esc(title));
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (LEFT + W - RIGHT) / 2.0, H - 12.0, esc(x_label));
    let _ = writeln!(
        out,
        r#"<text transform="translate(16 {}) rotate(-90)" text-anchor="middle">{}</text>"#,
        (TOP + H - BOTTOM) / 2.0,
        esc(y_label)
    );
}

fn axes(out: &mut String, f: &Frame, log_x: bool) {
    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - LEFT - RIGHT,
        H - TOP - BOTTOM
    );
    for k in 0..=4 {
        let xv = f.x.0 + (f.x.1 - f.x.0) * k as f64 / 4.0;
        let yv = f.y.0 + (f.y.1 - f.y.0) * k as f64 / 4.0;
        let label = if log_x { tick(10f64.powf(xv)) } else { tick(xv) };
        let _ = writeln!(out, r#"<text x="{:.1}" y="{}" text-anchor="middle">{label}</text>"#, f.px(xv), H - BOTTOM + 16.0);
        let _ = writeln!(out, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, LEFT - 6.0, f.py(yv) + 4.0, tick(yv));
    }
}

impl Chart {
    pub fn to_svg(&self) -> String {
        let tx = |x: f64| if self.log_x { x.log10() } else { x };
        let pts: Vec<Vec<(f64, f64)>> = self
            .series
            .iter()
            .map(|s| {
                s.points
                    .iter()
                    .filter(|p| p.1.is_finite() && (!self.log_x || p.0 > 0.0))
                    .map(|&(x, y)| (tx(x), y))
                    .collect()
            })
            .collect();
        let f = Frame {
            x: range(pts.iter().flatten().map(|p| p.0)),
            y: range(pts.iter().flatten().map(|p| p.1)),
        };
        let mut out = String::new();
        open(&mut out, &self.title, &self.x_label, &self.y_label);
        axes(&mut out, &f, self.log_x);
        for (k, (s, p)) in self.series.iter().zip(&pts).enumerate() {
            let c = COLORS[k % COLORS.len()];
            match s.style {
                Style::Line => {
                    let path: Vec<String> = p.iter().map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y))).collect();
                    let _ = writeln!(out, r#"<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
                }
                Style::Markers => {
                    for &(x, y) in p {
                        let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{c}"/>"#, f.px(x), f.py(y));
                    }
                }
            }
            let ly = TOP + 10.0 + 18.0 * k as f64;
            let _ = writeln!(out, r#"<rect x="{}" y="{}" width="12" height="4" fill="{c}"/>"#, W - RIGHT + 10.0, ly - 4.0);
            let _ = writeln!(out, r#"<text x="{}" y="{ly}">{}</text>"#, W - RIGHT + 28.0, esc(&s.label));
        }
        out.push_str("</svg>\n");
        out
    }
}

/// Blue for negative, red for positive, white at zero.
fn diverging(v: f64, scale: f64) -> String {
    let t = if scale > 0.0 { (v / scale).clamp(-1.0, 1.0) } else { 0.0 };
    let fade = |a: f64| (255.0 * (1.0 - a)).round() as u8;
    let (r, g, b) = if t >= 0.0 { (255, fade(t), fade(t)) } else { (fade(-t), fade(-t), 255) };
    format!("#{r:02x}{g:02x}{b:02x}")
}

impl Heatmap {
    pub fn to_svg(&self) -> String {
        let f = Frame {
            x: range(self.cells.iter().flat_map(|c| [c.x0, c.x1])),
            y: range(self.cells.iter().flat_map(|c| [c.y0, c.y1])),
        };
        let scale = self.cells.iter().map(|c| c.value.abs()).filter(|v| v.is_finite()).fold(0.0, f64::max);
        let mut out = String::new();
        open(&mut out, &self.title, &self.x_label, &self.y_label);
        for c in &self.cells {
            let (x0, x1) = (f.px(c.x0), f.px(c.x1));
            let (y0, y1) = (f.py(c.y1), f.py(c.y0));
            let _ = writeln!(
                out,
                r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                x1 - x0,
                y1 - y0,
                diverging(c.value, scale)
            );
        }
        axes(&mut out, &f, false);
        for (k, v) in [scale, 0.0, -scale].into_iter().enumerate() {
            let ly = TOP + 10.0 + 18.0 * k as f64;
            let _ = writeln!(out, r#"<rect x="{}" y="{}" width="12" height="12" fill="{}" stroke="black"/>"#, W - RIGHT + 10.0, ly - 10.0, diverging(v, scale));
            let _ = writeln!(out, r#"<text x="{}" y="{ly}">{}</text>"#, W - RIGHT + 28.0, tick(v));
        }
        out.push_str("</svg>\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_is_well_formed_and_stable() {
        let c = Chart {
            title: "a<b".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            log_x: true,
            series: vec![Series {
                label: "s".into(),
                points: vec![(1e-3, 1.0), (0.0, 2.0), (1.0, f64::NAN), (10.0, 3.0)],
                style: Style::Line,
            }],
        };
        let svg = c.to_svg();
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("a&lt;b"));
        assert!(!svg.contains("NaN"));
        assert_eq!(svg, c.to_svg());
    }

    #[test]
    fn heatmap_colors_by_sign() {
        assert_eq!(diverging(1.0, 1.0), "#ff0000");
        assert_eq!(diverging(-1.0, 1.0), "#0000ff");
        assert_eq!(diverging(0.0, 1.0), "#ffffff");
    }
}
