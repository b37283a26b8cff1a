//! Tiny self-contained SVG line, scatter and ellipse plots.

use std::fmt::Write;

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];
const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: [f64; 4] = [50.0, 20.0, 50.0, 64.0]; // top, right, bottom, left

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Line,
    Points,
    Dashed,
}

#[derive(Debug, Clone)]
struct Series {
    label: Option<String>,
    color: usize,
    kind: Kind,
    points: Vec<(f64, f64)>,
    /// Symmetric vertical error bars, one per point.
    errors: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Plot {
    title: String,
    x_label: String,
    y_label: String,
    series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Round tick step for a span.
fn tick_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let n = raw / mag;
    mag * if n < 1.5 { 1.0 } else if n < 3.5 { 2.0 } else if n < 7.5 { 5.0 } else { 10.0 }
}

impl Plot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self { title: title.into(), x_label: x_label.into(), y_label: y_label.into(), series: Vec::new() }
    }

    fn next_color(&self) -> usize {
        self.series.iter().filter(|s| s.label.is_some()).count() % PALETTE.len()
    }

    pub fn line(&mut self, label: &str, points: &[(f64, f64)], errors: Option<&[f64]>) {
        let color = self.next_color();
        self.series.push(Series {
            label: Some(label.into()),
            color,
            kind: Kind::Line,
            points: points.to_vec(),
            errors: errors.map(<[f64]>::to_vec),
        });
    }

    pub fn points(&mut self, label: &str, points: &[(f64, f64)]) {
        let color = self.next_color();
        self.series.push(Series { label: Some(label.into()), color, kind: Kind::Points, points: points.to_vec(), errors: None });
    }

    /// Unlabeled dashed reference line.
    pub fn reference(&mut self, points: &[(f64, f64)]) {
        self.series.push(Series { label: None, color: 0, kind: Kind::Dashed, points: points.to_vec(), errors: None });
    }

    /// Ellipse outline in data coordinates; `rotation` in radians.
    pub fn ellipse(&mut self, label: Option<&str>, center: (f64, f64), half_axes: (f64, f64), rotation: f64, color: usize) {
        let (c, s) = (rotation.cos(), rotation.sin());
        let points = (0..=64)
            .map(|i| {
                let a = i as f64 / 64.0 * std::f64::consts::TAU;
                let (u, v) = (half_axes.0 * a.cos(), half_axes.1 * a.sin());
                (center.0 + c * u - s * v, center.1 + s * u + c * v)
            })
            .collect();
        self.series.push(Series {
            label: label.map(str::to_string),
            color: color % PALETTE.len(),
            kind: Kind::Line,
            points,
            errors: None,
        });
    }

    fn bounds(&self) -> Option<[f64; 4]> {
        let mut b = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
        for s in &self.series {
            for (i, &(x, y)) in s.points.iter().enumerate() {
                if !(x.is_finite() && y.is_finite()) {
                    continue;
                }
                let e = s.errors.as_ref().map_or(0.0, |e| e[i].max(0.0));
                b = [b[0].min(x), b[1].max(x), b[2].min(y - e), b[3].max(y + e)];
            }
        }
        if !b[0].is_finite() {
            return None;
        }
        for k in [0, 2] {
            let pad = ((b[k + 1] - b[k]) * 0.05).max(1e-9);
            b[k] -= pad;
            b[k + 1] += pad;
        }
        Some(b)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(out, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, escape(&self.title));
        let Some([x0, x1, y0, y1]) = self.bounds() else {
            out.push_str("<text x=\"320\" y=\"210\" text-anchor=\"middle\">no data</text>\n</svg>\n");
            return out;
        };
        let (left, right, top, bottom) = (MARGIN[3], W - MARGIN[1], MARGIN[0], H - MARGIN[2]);
        let px = |x: f64| left + (x - x0) / (x1 - x0) * (right - left);
        let py = |y: f64| bottom - (y - y0) / (y1 - y0) * (bottom - top);

        let _ = writeln!(out, r#"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="black"/>"#, right - left, bottom - top);
        for (lo, hi, horizontal) in [(x0, x1, true), (y0, y1, false)] {
            let step = tick_step(hi - lo);
            let mut v = (lo / step).ceil() * step;
            while v <= hi {
                let decimals = (-step.log10().floor()).max(0.0) as usize;
                let label = format!("{:.*}", decimals, v);
                if horizontal {
                    let _ = writeln!(out, r#"<line x1="{0:.1}" x2="{0:.1}" y1="{bottom}" y2="{1}" stroke="black"/><text x="{0:.1}" y="{2}" text-anchor="middle">{label}</text>"#, px(v), bottom + 5.0, bottom + 18.0);
                } else {
                    let _ = writeln!(out, r#"<line x1="{0}" x2="{left}" y1="{1:.1}" y2="{1:.1}" stroke="black"/><text x="{2}" y="{3:.1}" text-anchor="end">{label}</text>"#, left - 5.0, py(v), left - 8.0, py(v) + 4.0);
                }
                v += step;
            }
        }
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (left + right) / 2.0, H - 12.0, escape(&self.x_label));
        let _ = writeln!(out, r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#, (top + bottom) / 2.0, escape(&self.y_label));

        let _ = writeln!(out, "<g>");
        for s in &self.series {
            let color = PALETTE[s.color];
            let pts: Vec<String> = s
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y)))
                .collect();
            match s.kind {
                Kind::Line | Kind::Dashed => {
                    let dash = if s.kind == Kind::Dashed { r#" stroke-dasharray="5,4""# } else { "" };
                    let stroke = if s.kind == Kind::Dashed { "gray" } else { color };
                    let _ = writeln!(out, r#"<polyline fill="none" stroke="{stroke}" stroke-width="1.5"{dash} points="{}"/>"#, pts.join(" "));
                }
                Kind::Points => {
                    for &(x, y) in s.points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
                        let _ = writeln!(out, r#"<circle cx="{:.1}" cy="{:.1}" r="3.5" fill="{color}"/>"#, px(x), py(y));
                    }
                }
            }
            if let Some(errors) = &s.errors {
                for (&(x, y), &e) in s.points.iter().zip(errors) {
                    if x.is_finite() && y.is_finite() && e.is_finite() {
                        let _ = writeln!(out, r#"<line x1="{0:.1}" x2="{0:.1}" y1="{1:.1}" y2="{2:.1}" stroke="{color}"/>"#, px(x), py(y - e), py(y + e));
                    }
                }
            }
        }
        out.push_str("</g>\n");
        let mut row = 0.0;
        for s in self.series.iter().filter(|s| s.label.is_some()) {
            let y = top + 14.0 + row * 16.0;
            let _ = writeln!(
                out,
                r#"<rect x="{}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{}</text>"#,
                right - 150.0,
                y - 9.0,
                PALETTE[s.color],
                right - 135.0,
                y,
                escape(s.label.as_deref().unwrap_or_default())
            );
            row += 1.0;
        }
        out.push_str("</svg>\n");
        out
    }
}
