//! Dependency-free SVG plots with fixed formatting so output is byte-stable.

use std::fmt::Write;

use nalgebra::DMatrix;

/// Colormap stops (viridis, sampled at 0, 0.25, 0.5, 0.75, 1).
const STOPS: [[u8; 3]; 5] = [[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]];

/// Categorical class colors, cycled.
const PALETTE: [&str; 10] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

const CELL: f64 = 12.0;
const MARGIN: f64 = 20.0;
/// Plot radius of the unit disk (or half-width of the plane) in pixels.
pub const RADIUS: f64 = 200.0;
pub const CENTER: f64 = RADIUS + MARGIN;

/// Linear interpolation through [`STOPS`] for `t` in `[0, 1]`.
pub fn colormap(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (STOPS.len() - 1) as f64;
    let i = (x.floor() as usize).min(STOPS.len() - 2);
    let f = x - i as f64;
    let c: Vec<u8> =
        (0..3).map(|k| (STOPS[i][k] as f64 + f * (STOPS[i + 1][k] as f64 - STOPS[i][k] as f64)).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

pub fn class_color(index: usize) -> &'static str {
    PALETTE[index % PALETTE.len()]
}

/// Heatmap of a nonnegative matrix, colored by value over its maximum.
pub fn heatmap(m: &DMatrix<f64>, title: &str) -> String {
    let (r, c) = m.shape();
    let max = m.iter().copied().fold(0.0, f64::max);
    let w = 2.0 * MARGIN + CELL * c as f64;
    let h = 2.0 * MARGIN + CELL * r as f64;
    let mut s = header(w, h);
    writeln!(s, "<title>{}</title>", escape(title)).unwrap();
    for i in 0..r {
        for j in 0..c {
            let t = if max > 0.0 { m[(i, j)] / max } else { 0.0 };
            writeln!(
                s,
                r#"<rect x="{:.1}" y="{:.1}" width="{CELL:.1}" height="{CELL:.1}" fill="{}"/>"#,
                MARGIN + CELL * j as f64,
                MARGIN + CELL * i as f64,
                colormap(t)
            )
            .unwrap();
        }
    }
    writeln!(s, r#"<text x="{MARGIN:.1}" y="{:.1}" font-size="10">max {max:.4}</text>"#, h - 5.0).unwrap();
    s.push_str("</svg>\n");
    s
}

/// Latent scatter with one overlaid path.
///
/// `points` and `path` are 2-D plot coordinates: Poincaré coordinates inside
/// the unit disk when `disk` is set, otherwise already scaled into `[-1, 1]`.
pub fn latent_plot(points: &[([f64; 2], usize, &str)], path: &[[f64; 2]], disk: bool, title: &str) -> String {
    let size = 2.0 * CENTER;
    let mut s = header(size, size);
    writeln!(s, "<title>{}</title>", escape(title)).unwrap();
    if disk {
        writeln!(
            s,
            r#"<circle class="boundary" cx="{CENTER:.3}" cy="{CENTER:.3}" r="{RADIUS:.3}" fill="none" stroke="black"/>"#
        )
        .unwrap();
    } else {
        writeln!(
            s,
            r#"<rect class="boundary" x="{MARGIN:.3}" y="{MARGIN:.3}" width="{:.3}" height="{:.3}" fill="none" stroke="black"/>"#,
            2.0 * RADIUS,
            2.0 * RADIUS
        )
        .unwrap();
    }
    for (p, class, id) in points {
        let (x, y) = to_px(*p);
        writeln!(
            s,
            r#"<circle class="point" cx="{x:.3}" cy="{y:.3}" r="3" fill="{}"><title>{}</title></circle>"#,
            class_color(*class),
            escape(id)
        )
        .unwrap();
    }
    if !path.is_empty() {
        let mut d = String::new();
        for (k, p) in path.iter().enumerate() {
            let (x, y) = to_px(*p);
            write!(d, "{}{x:.3} {y:.3}", if k == 0 { "M" } else { " L" }).unwrap();
        }
        writeln!(s, r#"<path d="{d}" fill="none" stroke="black" stroke-width="1.5"/>"#).unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Plot coordinates to pixels; `y` points up.
pub fn to_px(p: [f64; 2]) -> (f64, f64) {
    (CENTER + RADIUS * p[0], CENTER - RADIUS * p[1])
}

fn header(w: f64, h: f64) -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">\n"
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
