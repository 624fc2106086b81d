//! Minimal static SVG line charts.

use std::fmt::Write;

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 320.0;
const MARGIN_L: f64 = 58.0;
const MARGIN_R: f64 = 14.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 44.0;
const LEGEND_ROW: f64 = 16.0;

pub const PALETTE: [&str; 4] = ["#4d4d4d", "#1b9e77", "#d95f02", "#7570b3"];

pub struct Series {
    pub label: String,
    pub color: &'static str,
    pub dashed: bool,
    /// Right-continuous step function rather than a polyline.
    pub step: bool,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub band: Option<(Vec<f64>, Vec<f64>)>,
}

pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub zero_line: bool,
}

struct Scale {
    lo: f64,
    hi: f64,
    px_lo: f64,
    px_hi: f64,
}

impl Scale {
    fn map(&self, v: f64) -> f64 {
        self.px_lo + (v - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo)
    }
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let nice = if f < 1.5 {
        1.0
    } else if f < 3.0 {
        2.0
    } else if f < 7.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = lo.abs().max(1.0) * 0.05;
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

/// Vertices in data coordinates; a step function holds each value until the next x.
fn vertices(xs: &[f64], ys: &[f64], step: bool) -> Vec<(f64, f64)> {
    let mut v = Vec::with_capacity(2 * xs.len());
    for (i, (&x, &y)) in xs.iter().zip(ys).enumerate() {
        if step && i > 0 {
            v.push((x, ys[i - 1]));
        }
        v.push((x, y));
    }
    v
}

fn path_of(points: impl Iterator<Item = (f64, f64)>, sx: &Scale, sy: &Scale) -> String {
    let mut d = String::new();
    for (i, (x, y)) in points.enumerate() {
        let _ = write!(d, "{}{:.2},{:.2}", if i == 0 { "M" } else { " L" }, sx.map(x), sy.map(y));
    }
    d
}

fn path(xs: &[f64], ys: &[f64], sx: &Scale, sy: &Scale, step: bool) -> String {
    path_of(vertices(xs, ys, step).into_iter(), sx, sy)
}

fn band_polygon(xs: &[f64], lo: &[f64], hi: &[f64], sx: &Scale, sy: &Scale, step: bool) -> String {
    let upper = vertices(xs, hi, step);
    let lower = vertices(xs, lo, step);
    let mut d = path_of(upper.into_iter().chain(lower.into_iter().rev()), sx, sy);
    d.push_str(" Z");
    d
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn render_panel(out: &mut String, panel: &Panel, left: f64) {
    let legend_h = LEGEND_ROW * panel.series.len().div_ceil(2) as f64;
    let plot_bottom = PANEL_H - MARGIN_B - legend_h;
    let xs = panel.series.iter().flat_map(|s| s.x.iter().copied());
    let (x_lo, x_hi) = range(xs);
    let ys = panel.series.iter().flat_map(|s| {
        let b = s.band.iter().flat_map(|(l, u)| l.iter().chain(u).copied());
        s.y.iter().copied().chain(b)
    });
    let (mut y_lo, mut y_hi) = range(ys);
    if panel.zero_line {
        y_lo = y_lo.min(0.0);
        y_hi = y_hi.max(0.0);
    }
    let pad = (y_hi - y_lo) * 0.04;
    let sx = Scale {
        lo: x_lo,
        hi: x_hi,
        px_lo: left + MARGIN_L,
        px_hi: left + PANEL_W - MARGIN_R,
    };
    let sy = Scale {
        lo: y_lo - pad,
        hi: y_hi + pad,
        px_lo: plot_bottom,
        px_hi: MARGIN_T,
    };

    let _ = writeln!(
        out,
        r##"<rect x="{:.2}" y="{MARGIN_T:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#999"/>"##,
        sx.px_lo,
        sx.px_hi - sx.px_lo,
        plot_bottom - MARGIN_T
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="18" text-anchor="middle" font-size="13">{}</text>"#,
        left + PANEL_W / 2.0,
        escape(&panel.title)
    );
    for (axis_lo, axis_hi, horizontal) in [(x_lo, x_hi, true), (sy.lo, sy.hi, false)] {
        let step = nice_step(axis_hi - axis_lo);
        let mut v = (axis_lo / step).ceil() * step;
        while v <= axis_hi + 1e-9 * step {
            let label = format!("{}", (v / step).round() * step);
            let label = if label.len() > 8 { format!("{v:.3}") } else { label };
            if horizontal {
                let px = sx.map(v);
                let _ = writeln!(
                    out,
                    r##"<line x1="{px:.2}" y1="{plot_bottom:.2}" x2="{px:.2}" y2="{:.2}" stroke="#999"/><text x="{px:.2}" y="{:.2}" text-anchor="middle" font-size="10">{label}</text>"##,
                    plot_bottom + 4.0,
                    plot_bottom + 15.0
                );
            } else {
                let py = sy.map(v);
                let _ = writeln!(
                    out,
                    r##"<line x1="{:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#999"/><text x="{:.2}" y="{:.2}" text-anchor="end" font-size="10">{label}</text>"##,
                    sx.px_lo - 4.0,
                    sx.px_lo,
                    sx.px_lo - 6.0,
                    py + 3.5
                );
            }
            v += step;
        }
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="11">{}</text>"#,
        (sx.px_lo + sx.px_hi) / 2.0,
        plot_bottom + 30.0,
        escape(&panel.x_label)
    );
    let (yx, yy) = (left + 14.0, (MARGIN_T + plot_bottom) / 2.0);
    let _ = writeln!(
        out,
        r#"<text x="{yx:.2}" y="{yy:.2}" text-anchor="middle" font-size="11" transform="rotate(-90 {yx:.2} {yy:.2})">{}</text>"#,
        escape(&panel.y_label)
    );
    if panel.zero_line {
        let py = sy.map(0.0);
        let _ = writeln!(
            out,
            r##"<line x1="{:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#bbb" stroke-dasharray="2,2"/>"##,
            sx.px_lo, sx.px_hi
        );
    }

    for s in &panel.series {
        if let Some((lo, hi)) = &s.band {
            let _ = writeln!(
                out,
                r#"<path d="{}" fill="{}" fill-opacity="0.15" stroke="none"/>"#,
                band_polygon(&s.x, lo, hi, &sx, &sy, s.step),
                s.color
            );
        }
    }
    for s in &panel.series {
        let dash = if s.dashed { r#" stroke-dasharray="6,3""# } else { "" };
        let _ = writeln!(
            out,
            r#"<path d="{}" fill="none" stroke="{}" stroke-width="1.6"{dash}/>"#,
            path(&s.x, &s.y, &sx, &sy, s.step),
            s.color
        );
    }
    for (i, s) in panel.series.iter().enumerate() {
        let x = left + MARGIN_L + (i % 2) as f64 * (PANEL_W - MARGIN_L) / 2.0;
        let y = PANEL_H - legend_h - 4.0 + LEGEND_ROW * (i / 2) as f64 + 10.0;
        let dash = if s.dashed { r#" stroke-dasharray="6,3""# } else { "" };
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}" stroke-width="1.6"{dash}/><text x="{:.2}" y="{y:.2}" font-size="10">{}</text>"#,
            y - 3.5,
            x + 22.0,
            y - 3.5,
            s.color,
            x + 27.0,
            escape(&s.label)
        );
    }
}

/// Panels side by side in one SVG document.
pub fn render(panels: &[Panel]) -> String {
    let width = PANEL_W * panels.len().max(1) as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{PANEL_H:.0}" viewBox="0 0 {width:.0} {PANEL_H:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, p) in panels.iter().enumerate() {
        render_panel(&mut out, p, i as f64 * PANEL_W);
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_well_formed_document() {
        let panel = Panel {
            title: "cause 1 & 2".into(),
            x_label: "time".into(),
            y_label: "incidence".into(),
            series: vec![Series {
                label: "crude z=1".into(),
                color: PALETTE[0],
                dashed: false,
                step: true,
                x: vec![0.0, 1.0, 2.0],
                y: vec![0.0, 0.25, 0.5],
                band: Some((vec![0.0, 0.1, 0.3], vec![0.0, 0.4, 0.7])),
            }],
            zero_line: false,
        };
        let svg = render(&[panel]);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("cause 1 &amp; 2"));
        assert_eq!(svg.matches("<path").count(), 2);
    }

    #[test]
    fn nice_steps() {
        assert_eq!(nice_step(1.0), 0.2);
        assert_eq!(nice_step(10.0), 2.0);
        assert_eq!(nice_step(0.03), 0.005);
    }
}
