//! Minimal SVG success plots: axes, grid and one polyline per curve.

use std::fmt::Write as _;

use crate::metrics::SuccessCurve;

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Success plot with overlap threshold on x and success rate on y.
pub fn success_svg(curves: &[(&str, &SuccessCurve)]) -> String {
    let pw = WIDTH - 2.0 * MARGIN;
    let ph = HEIGHT - 2.0 * MARGIN;
    let px = |x: f64| MARGIN + x * pw;
    let py = |y: f64| HEIGHT - MARGIN - y * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for k in 0..=10 {
        let v = k as f64 / 10.0;
        let _ = writeln!(
            s,
            r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#dddddd"/>"##,
            px(0.0),
            py(v),
            px(1.0),
            py(v)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{v:.1}</text>"#,
            px(0.0) - 4.0,
            py(v) + 3.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">{v:.1}</text>"#,
            px(v),
            py(0.0) + 14.0
        );
    }
    let _ = writeln!(
        s,
        r#"<polyline points="{:.1},{:.1} {:.1},{:.1} {:.1},{:.1}" fill="none" stroke="black"/>"#,
        px(0.0),
        py(1.0),
        px(0.0),
        py(0.0),
        px(1.0),
        py(0.0)
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">Overlap threshold</text>"#,
        px(0.5),
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.1})">Success rate</text>"#,
        py(0.5),
        py(0.5)
    );
    for (idx, (name, curve)) in curves.iter().enumerate() {
        let color = COLORS[idx % COLORS.len()];
        let points: Vec<String> = curve
            .thresholds
            .iter()
            .zip(&curve.values)
            .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            points.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" fill="{color}">{} [{:.3}]</text>"#,
            px(0.62),
            py(0.95) + 14.0 * idx as f64,
            xml_escape(name),
            curve.area()
        );
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_has_one_polyline_per_curve_plus_axes() {
        let c = SuccessCurve {
            thresholds: vec![0.0, 0.5, 1.0],
            values: vec![1.0, 0.5, 0.0],
        };
        let svg = success_svg(&[("a", &c), ("b<c>", &c)]);
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert!(svg.contains("b&lt;c&gt;"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
