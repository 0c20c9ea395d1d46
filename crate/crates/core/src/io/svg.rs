//! Minimal SVG renderers for heatmaps and line charts.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 60.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Blue-to-yellow ramp for `t` in `[0, 1]`.
fn ramp(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let stops = [
        (68.0, 1.0, 84.0),
        (59.0, 82.0, 139.0),
        (33.0, 145.0, 140.0),
        (94.0, 201.0, 98.0),
        (253.0, 231.0, 37.0),
    ];
    let x = t * (stops.len() - 1) as f64;
    let i = (x.floor() as usize).min(stops.len() - 2);
    let f = x - i as f64;
    let mix = |a: f64, b: f64| (a + (b - a) * f).round() as u8;
    let (a, b) = (stops[i], stops[i + 1]);
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn range(values: &[f64]) -> (f64, f64) {
    let finite = values.iter().copied().filter(|v| v.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, f64::min);
    let hi = finite.fold(f64::NEG_INFINITY, f64::max);
    if lo.is_finite() && hi > lo {
        (lo, hi)
    } else if lo.is_finite() {
        (lo - 0.5, lo + 0.5)
    } else {
        (0.0, 1.0)
    }
}

fn open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    s
}

fn colorbar(s: &mut String, lo: f64, hi: f64) {
    let x = W - MARGIN + 15.0;
    let h = H - 2.0 * MARGIN;
    for k in 0..50 {
        let t = k as f64 / 49.0;
        let y = MARGIN + h * (1.0 - t) - h / 50.0;
        let _ = writeln!(
            s,
            r#"<rect x="{x}" y="{y:.2}" width="12" height="{:.2}" fill="{}"/>"#,
            h / 50.0 + 0.5,
            ramp(t)
        );
    }
    for (v, y) in [(hi, MARGIN), (lo, H - MARGIN)] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{y}" font-family="sans-serif" font-size="10">{v:.3e}</text>"#,
            x - 40.0
        );
    }
}

/// Square-grid field in row-major order (x fastest), y axis pointing up.
pub fn field_heatmap(values: &[f64], n_side: usize, title: &str) -> String {
    let mut s = open(title);
    let (lo, hi) = range(values);
    let size = (H - 2.0 * MARGIN) / n_side.max(1) as f64;
    for (q, v) in values.iter().enumerate() {
        let (i, j) = (q % n_side, q / n_side);
        let x = MARGIN + i as f64 * size;
        let y = H - MARGIN - (j + 1) as f64 * size;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
            size + 0.3,
            size + 0.3,
            ramp((v - lo) / (hi - lo))
        );
    }
    colorbar(&mut s, lo, hi);
    s.push_str("</svg>\n");
    s
}

/// Labelled matrix, `values[row * cols + col]`, rows drawn bottom to top.
pub fn matrix_heatmap(
    row_labels: &[String],
    col_labels: &[String],
    values: &[f64],
    title: &str,
    row_axis: &str,
    col_axis: &str,
) -> String {
    let mut s = open(title);
    let (lo, hi) = range(values);
    let (nr, nc) = (row_labels.len().max(1), col_labels.len().max(1));
    let cw = (W - 2.0 * MARGIN - 40.0) / nc as f64;
    let ch = (H - 2.0 * MARGIN) / nr as f64;
    for (k, v) in values.iter().enumerate() {
        let (r, c) = (k / nc, k % nc);
        let x = MARGIN + c as f64 * cw;
        let y = H - MARGIN - (r + 1) as f64 * ch;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{cw:.2}" height="{ch:.2}" fill="{}" stroke="white"/>"#,
            ramp((v - lo) / (hi - lo))
        );
    }
    for (r, l) in row_labels.iter().enumerate() {
        let y = H - MARGIN - (r as f64 + 0.5) * ch;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{y:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
            MARGIN - 6.0,
            escape(l)
        );
    }
    for (c, l) in col_labels.iter().enumerate() {
        let x = MARGIN + (c as f64 + 0.5) * cw;
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            H - MARGIN + 16.0,
            escape(l)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 15.0,
        escape(col_axis)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {})" text-anchor="middle">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(row_axis)
    );
    colorbar(&mut s, lo, hi);
    s.push_str("</svg>\n");
    s
}

/// Polyline chart of several series against their index.
pub fn line_chart(series: &[(String, Vec<f64>)], title: &str, x_axis: &str, y_axis: &str) -> String {
    let mut s = open(title);
    let all: Vec<f64> = series.iter().flat_map(|(_, v)| v.iter().copied()).collect();
    let (lo, hi) = range(&all);
    let n = series.iter().map(|(_, v)| v.len()).max().unwrap_or(0).max(2);
    let px = |i: usize| MARGIN + (W - 2.0 * MARGIN) * i as f64 / (n - 1) as f64;
    let py = |v: f64| H - MARGIN - (H - 2.0 * MARGIN) * (v - lo) / (hi - lo);
    let _ = writeln!(
        s,
        r#"<path d="M{MARGIN} {MARGIN} V{} H{}" fill="none" stroke="black"/>"#,
        H - MARGIN,
        W - MARGIN
    );
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd"];
    for (k, (name, v)) in series.iter().enumerate() {
        let color = colors[k % colors.len()];
        let pts: Vec<String> = v
            .iter()
            .enumerate()
            .filter(|(_, y)| y.is_finite())
            .map(|(i, y)| format!("{:.2},{:.2}", px(i), py(*y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#,
            W - MARGIN - 150.0,
            MARGIN + 14.0 * (k + 1) as f64,
            escape(name)
        );
    }
    for (v, y) in [(hi, MARGIN), (lo, H - MARGIN)] {
        let _ = writeln!(
            s,
            r#"<text x="4" y="{y}" font-family="sans-serif" font-size="10">{v:.3e}</text>"#
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 20.0,
        escape(x_axis)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
        W / 2.0,
        44.0,
        escape(y_axis)
    );
    s.push_str("</svg>\n");
    s
}
