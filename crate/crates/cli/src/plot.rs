//! Minimal self-contained SVG 1.1 plots: heatmaps, eigenvalue scatter with
//! the unit circle, and line charts. Output depends only on the data.

use std::fmt::Write;

const W: f64 = 480.0;
const H: f64 = 400.0;
const MARGIN: f64 = 48.0;

fn header(width: f64, height: f64, title: &str) -> String {
    let mut s = format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}</text>",
        width / 2.0,
        escape(title)
    );
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Diverging blue-white-red map on `t ∈ [-1, 1]`.
fn diverging(t: f64) -> (u8, u8, u8) {
    let t = t.clamp(-1.0, 1.0);
    let lerp = |a: f64, b: f64, u: f64| (a + (b - a) * u).round() as u8;
    if t < 0.0 {
        let u = -t;
        (lerp(255.0, 33.0, u), lerp(255.0, 102.0, u), lerp(255.0, 172.0, u))
    } else {
        (lerp(255.0, 178.0, t), lerp(255.0, 24.0, t), lerp(255.0, 43.0, t))
    }
}

/// Sequential dark-to-yellow map on `t ∈ [0, 1]`.
fn sequential(t: f64) -> (u8, u8, u8) {
    const STOPS: [(f64, f64, f64); 5] = [
        (68.0, 1.0, 84.0),
        (59.0, 82.0, 139.0),
        (33.0, 145.0, 140.0),
        (94.0, 201.0, 98.0),
        (253.0, 231.0, 37.0),
    ];
    let x = t.clamp(0.0, 1.0) * 4.0;
    let i = (x.floor() as usize).min(3);
    let u = x - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    let mix = |p: f64, q: f64| (p + (q - p) * u).round() as u8;
    (mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Heatmap of a row-major `rows × cols` array. Signed data uses a
/// symmetric diverging scale; nonnegative data a sequential one.
pub fn heatmap(values: &[f64], rows: usize, cols: usize, title: &str) -> String {
    assert_eq!(values.len(), rows * cols, "heatmap shape mismatch");
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let signed = lo < 0.0;
    let amp = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    let side = W - 2.0 * MARGIN;
    let (cw, ch) = (side / cols as f64, side / rows as f64);
    let mut s = header(W, W, title);
    for r in 0..rows {
        for c in 0..cols {
            let v = values[r * cols + c];
            let (red, green, blue) = if signed {
                diverging(v / amp)
            } else if hi > lo {
                sequential((v - lo) / (hi - lo))
            } else {
                sequential(0.5)
            };
            // first row at the bottom, like a y axis
            let y = MARGIN + (rows - 1 - r) as f64 * ch;
            let _ = writeln!(
                s,
                "<rect x=\"{:.3}\" y=\"{:.3}\" width=\"{:.3}\" height=\"{:.3}\" fill=\"#{red:02x}{green:02x}{blue:02x}\"/>",
                MARGIN + c as f64 * cw,
                y,
                cw + 0.05,
                ch + 0.05
            );
        }
    }
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">range [{lo:.3e}, {hi:.3e}]</text>",
        W / 2.0,
        W - MARGIN / 2.0
    );
    s.push_str("</svg>\n");
    s
}

/// Points in the complex plane with the unit circle overlaid.
pub fn eigenvalue_scatter(points: &[(f64, f64)], title: &str) -> String {
    let extent = points
        .iter()
        .map(|&(x, y)| x.abs().max(y.abs()))
        .fold(1.1f64, f64::max)
        * 1.05;
    let side = W - 2.0 * MARGIN;
    let to_px = |x: f64, y: f64| {
        (
            MARGIN + (x + extent) / (2.0 * extent) * side,
            MARGIN + (extent - y) / (2.0 * extent) * side,
        )
    };
    let mut s = header(W, W, title);
    let (cx, cy) = to_px(0.0, 0.0);
    let r = side / (2.0 * extent);
    let _ = writeln!(
        s,
        "<line x1=\"{MARGIN}\" y1=\"{cy:.3}\" x2=\"{:.3}\" y2=\"{cy:.3}\" stroke=\"#bbbbbb\"/>",
        W - MARGIN
    );
    let _ = writeln!(
        s,
        "<line x1=\"{cx:.3}\" y1=\"{MARGIN}\" x2=\"{cx:.3}\" y2=\"{:.3}\" stroke=\"#bbbbbb\"/>",
        W - MARGIN
    );
    let _ = writeln!(
        s,
        "<circle cx=\"{cx:.3}\" cy=\"{cy:.3}\" r=\"{r:.3}\" fill=\"none\" stroke=\"#444444\" stroke-dasharray=\"4 3\"/>"
    );
    for &(x, y) in points {
        let (px, py) = to_px(x, y);
        let _ = writeln!(s, "<circle cx=\"{px:.3}\" cy=\"{py:.3}\" r=\"3\" fill=\"#b2182b\"/>");
    }
    s.push_str("</svg>\n");
    s
}

/// Line chart of one or more `(x, y)` series, optionally with a log y axis.
pub fn line_chart(series: &[(&str, Vec<(f64, f64)>)], log_y: bool, title: &str) -> String {
    const COLORS: [&str; 6] = ["#2166ac", "#b2182b", "#1b7837", "#762a83", "#e08214", "#4d4d4d"];
    let ty = |y: f64| if log_y { y.max(f64::MIN_POSITIVE).log10() } else { y };
    let pts = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        if !y.is_finite() {
            continue;
        }
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(ty(y));
        y1 = y1.max(ty(y));
    }
    if !(x0 < x1) {
        x1 = x0 + 1.0;
    }
    if !(y0 < y1) {
        y1 = y0 + 1.0;
    }
    let to_px = |x: f64, y: f64| {
        (
            MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN),
            H - MARGIN - (ty(y) - y0) / (y1 - y0) * (H - 2.0 * MARGIN),
        )
    };
    let mut s = header(W, H, title);
    let _ = writeln!(
        s,
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#888888\"/>",
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    );
    let label = |v: f64| if log_y { format!("1e{v:.1}") } else { format!("{v:.3}") };
    let _ = writeln!(
        s,
        "<text x=\"4\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\">{}</text>\n<text x=\"4\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\">{}</text>",
        MARGIN + 4.0,
        label(y1),
        H - MARGIN,
        label(y0)
    );
    let _ = writeln!(
        s,
        "<text x=\"{MARGIN}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\">{x0}</text>\n<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{x1}</text>",
        H - MARGIN + 14.0,
        W - MARGIN,
        H - MARGIN + 14.0
    );
    for (i, (name, points)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = points
            .iter()
            .filter(|(_, y)| y.is_finite())
            .map(|&(x, y)| {
                let (px, py) = to_px(x, y);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        let _ = writeln!(
            s,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            path.join(" ")
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{color}\">{}</text>",
            W - MARGIN - 4.0,
            MARGIN + 14.0 * (i + 1) as f64,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heatmap_has_one_cell_per_value() {
        let svg = heatmap(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0], 2, 3, "a<b");
        assert_eq!(svg.matches("<rect x=").count(), 6);
        assert!(svg.contains("a&lt;b"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn colormaps_hit_their_endpoints() {
        assert_eq!(diverging(0.0), (255, 255, 255));
        assert_eq!(diverging(1.0), (178, 24, 43));
        assert_eq!(sequential(0.0), (68, 1, 84));
        assert_eq!(sequential(1.0), (253, 231, 37));
    }

    #[test]
    fn scatter_and_lines_are_deterministic() {
        let a = eigenvalue_scatter(&[(1.0, 0.0), (0.5, -0.5)], "spectrum");
        assert_eq!(a, eigenvalue_scatter(&[(1.0, 0.0), (0.5, -0.5)], "spectrum"));
        assert_eq!(a.matches("<circle").count(), 3);
        let l = line_chart(&[("v", vec![(0.0, 1.0), (1.0, 0.1)])], true, "curve");
        assert!(l.contains("<polyline"));
    }
}
