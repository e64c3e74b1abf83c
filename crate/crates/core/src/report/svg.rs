//! Dependency-light SVG line charts: fixed 1200×400 viewBox, one polyline
//! per series. Looks are a non-goal; well-formed XML is the contract.

use chrono::NaiveDateTime;

const WIDTH: f64 = 1200.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 40.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders one chart with a shared time axis.
pub fn line_chart(
    title: &str,
    y_label: &str,
    times: &[NaiveDateTime],
    ids: &[String],
    rows: &[Vec<f64>],
) -> String {
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for row in rows {
        for &v in row {
            y_min = y_min.min(v);
            y_max = y_max.max(v);
        }
    }
    if !y_min.is_finite() || !y_max.is_finite() {
        y_min = 0.0;
        y_max = 1.0;
    }
    if (y_max - y_min).abs() < 1e-12 {
        y_min -= 0.5;
        y_max += 0.5;
    }
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let n = times.len().max(2) as f64;
    let x_of = |k: usize| MARGIN_LEFT + plot_w * k as f64 / (n - 1.0);
    let y_of = |v: f64| MARGIN_TOP + plot_h * (1.0 - (v - y_min) / (y_max - y_min));

    let mut svg = String::new();
    svg.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" width=\"{WIDTH}\" height=\"{HEIGHT}\">\n"
    ));
    svg.push_str(&format!(
        "  <title>{}</title>\n  <rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n",
        escape(title)
    ));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">{}</text>\n",
        MARGIN_LEFT,
        escape(title)
    ));
    // Axes.
    svg.push_str(&format!(
        "  <line x1=\"{MARGIN_LEFT}\" y1=\"{MARGIN_TOP}\" x2=\"{MARGIN_LEFT}\" y2=\"{}\" stroke=\"black\"/>\n",
        MARGIN_TOP + plot_h
    ));
    svg.push_str(&format!(
        "  <line x1=\"{MARGIN_LEFT}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        MARGIN_TOP + plot_h,
        MARGIN_LEFT + plot_w,
        MARGIN_TOP + plot_h
    ));
    // Y extremes and axis label.
    svg.push_str(&format!(
        "  <text x=\"5\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{:.3}</text>\n",
        MARGIN_TOP + 4.0,
        y_max
    ));
    svg.push_str(&format!(
        "  <text x=\"5\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{:.3}</text>\n",
        MARGIN_TOP + plot_h,
        y_min
    ));
    svg.push_str(&format!(
        "  <text x=\"5\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
        MARGIN_TOP + plot_h / 2.0,
        escape(y_label)
    ));
    // Time extent labels.
    if let (Some(first), Some(last)) = (times.first(), times.last()) {
        svg.push_str(&format!(
            "  <text x=\"{MARGIN_LEFT}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
            HEIGHT - 10.0,
            first.format("%Y-%m-%dT%H:%M")
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
            MARGIN_LEFT + plot_w,
            HEIGHT - 10.0,
            last.format("%Y-%m-%dT%H:%M")
        ));
    }
    for (s, id) in ids.iter().enumerate() {
        let color = PALETTE[s % PALETTE.len()];
        let mut points = String::new();
        for (k, row) in rows.iter().enumerate() {
            if k > 0 {
                points.push(' ');
            }
            points.push_str(&format!("{:.2},{:.2}", x_of(k), y_of(row[s])));
        }
        svg.push_str(&format!(
            "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1\" points=\"{points}\">\n    <title>{}</title>\n  </polyline>\n",
            escape(id)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
