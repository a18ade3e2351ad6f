//! Minimal self-contained SVG line charts. No drawing dependency: axes,
//! ticks, polylines, and a legend are emitted as plain markup with fixed
//! decimal formatting so the same data always yields the same bytes.

use std::fmt::Write as _;

pub struct Series {
    pub label: String,
    /// CSS color, e.g. "#1f77b4".
    pub color: &'static str,
    pub points: Vec<(f64, f64)>,
}

pub const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 52.0;

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        // Flat data still needs a visible band.
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-3) {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.3}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        if s.is_empty() || s == "-" { "0".into() } else { s.to_string() }
    }
}

/// Renders one chart; series may have different lengths but share axes.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (x_lo, x_hi) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (mut y_lo, mut y_hi) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let pad = 0.05 * (y_hi - y_lo);
    y_lo -= pad;
    y_hi += pad;

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = move |x: f64| MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = move |y: f64|MARGIN_T + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"sans-serif\" font-size=\"13\">"
    );
    let _ = writeln!(svg, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    let _ = writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"22\" text-anchor=\"middle\" font-size=\"16\">{}</text>",
        MARGIN_L + plot_w / 2.0,
        title
    );

    // Grid and ticks, five divisions per axis.
    for i in 0..=4 {
        let fx = x_lo + (x_hi - x_lo) * i as f64 / 4.0;
        let fy = y_lo + (y_hi - y_lo) * i as f64 / 4.0;
        let px = sx(fx);
        let py = sy(fy);
        let _ = writeln!(
            svg,
            "<line x1=\"{px:.1}\" y1=\"{MARGIN_T:.1}\" x2=\"{px:.1}\" y2=\"{:.1}\" \
             stroke=\"#dddddd\"/>",
            MARGIN_T + plot_h
        );
        let _ = writeln!(
            svg,
            "<line x1=\"{MARGIN_L:.1}\" y1=\"{py:.1}\" x2=\"{:.1}\" y2=\"{py:.1}\" \
             stroke=\"#dddddd\"/>",
            MARGIN_L + plot_w
        );
        let _ = writeln!(
            svg,
            "<text x=\"{px:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            MARGIN_T + plot_h + 18.0,
            tick_label(fx)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
            MARGIN_L - 6.0,
            py + 4.0,
            tick_label(fy)
        );
    }
    let _ = writeln!(
        svg,
        "<rect x=\"{MARGIN_L:.1}\" y=\"{MARGIN_T:.1}\" width=\"{plot_w:.1}\" \
         height=\"{plot_h:.1}\" fill=\"none\" stroke=\"black\"/>"
    );
    let _ = writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 12.0,
        x_label
    );
    let _ = writeln!(
        svg,
        "<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" \
         transform=\"rotate(-90 16 {:.1})\">{}</text>",
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0,
        y_label
    );

    for s in series {
        if s.points.is_empty() {
            continue;
        }
        let mut pts = String::new();
        for (x, y) in &s.points {
            let _ = write!(pts, "{:.2},{:.2} ", sx(*x), sy(*y));
        }
        let _ = writeln!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>",
            pts.trim_end(),
            s.color
        );
    }

    // Legend, top right inside the frame.
    for (i, s) in series.iter().enumerate() {
        let y = MARGIN_T + 16.0 + 18.0 * i as f64;
        let x = MARGIN_L + plot_w - 150.0;
        let _ = writeln!(
            svg,
            "<line x1=\"{x:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"{}\" \
             stroke-width=\"2\"/>",
            x + 22.0,
            s.color
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\">{}</text>",
            x + 28.0,
            y + 4.0,
            s.label
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wave() -> Vec<(f64, f64)> {
        (0..50).map(|i| (i as f64 * 0.1, (i as f64 * 0.3).sin())).collect()
    }

    #[test]
    fn charts_are_self_contained_svg() {
        let svg = line_chart(
            "Speeds",
            "time [s]",
            "speed [m/s]",
            &[Series { label: "human".into(), color: COLORS[0], points: wave() }],
        );
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("polyline"));
        assert!(svg.contains("Speeds"));
        assert!(!svg.contains("http://") || svg.contains("xmlns"), "no external fetches");
    }

    #[test]
    fn same_data_same_bytes() {
        let a = line_chart("t", "x", "y", &[Series { label: "a".into(), color: COLORS[1], points: wave() }]);
        let b = line_chart("t", "x", "y", &[Series { label: "a".into(), color: COLORS[1], points: wave() }]);
        assert_eq!(a, b);
    }

    #[test]
    fn flat_and_empty_series_do_not_break_the_axes() {
        let svg = line_chart(
            "flat",
            "x",
            "y",
            &[
                Series { label: "flat".into(), color: COLORS[0], points: vec![(0.0, 2.0), (1.0, 2.0)] },
                Series { label: "none".into(), color: COLORS[1], points: vec![] },
            ],
        );
        assert!(svg.contains("polyline"));
        assert!(!svg.contains("NaN"));
        assert!(!svg.contains("inf"));
    }
}
