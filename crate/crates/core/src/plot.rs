//! Static SVG charts: signed bar charts and line charts.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 360.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 72.0;
const POSITIVE: &str = "#2b6cb0";
const NEGATIVE: &str = "#c53030";
const PALETTE: [&str; 4] = ["#2b6cb0", "#dd6b20", "#2f855a", "#6b46c1"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>
"#,
        W / 2.0,
        escape(title)
    );
}

fn nice_range(lo: f64, hi: f64) -> (f64, f64) {
    if (hi - lo).abs() < 1e-12 {
        let pad = if hi.abs() > 0.0 { hi.abs() * 0.1 } else { 1.0 };
        (lo - pad, hi + pad)
    } else {
        let pad = (hi - lo) * 0.08;
        (lo - pad, hi + pad)
    }
}

fn y_axis(out: &mut String, lo: f64, hi: f64, label: &str) {
    let plot_h = H - MARGIN_T - MARGIN_B;
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let y = MARGIN_T + plot_h * (1.0 - i as f64 / 4.0);
        let _ = writeln!(
            out,
            r##"<line x1="{MARGIN_L}" x2="{}" y1="{y:.1}" y2="{y:.1}" stroke="#e2e8f0"/><text x="{}" y="{:.1}" text-anchor="end">{v:.3}</text>"##,
            W - MARGIN_R,
            MARGIN_L - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text transform="translate(14,{:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
        MARGIN_T + plot_h / 2.0,
        escape(label)
    );
}

/// Bars around zero; positive values blue, negative red.
pub fn signed_bar_chart(title: &str, y_label: &str, labels: &[String], values: &[f64]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let lo = values.iter().copied().fold(0.0, f64::min);
    let hi = values.iter().copied().fold(0.0, f64::max);
    let (lo, hi) = nice_range(lo, hi);
    y_axis(&mut out, lo, hi, y_label);
    let plot_w = W - MARGIN_L - MARGIN_R;
    let plot_h = H - MARGIN_T - MARGIN_B;
    let to_y = |v: f64| MARGIN_T + plot_h * (hi - v) / (hi - lo);
    let n = values.len().max(1) as f64;
    let slot = plot_w / n;
    for (i, (label, &v)) in labels.iter().zip(values).enumerate() {
        let x = MARGIN_L + slot * i as f64 + slot * 0.15;
        let (y0, y1) = (to_y(0.0), to_y(v));
        let colour = if v >= 0.0 { POSITIVE } else { NEGATIVE };
        let _ = writeln!(
            out,
            r#"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{colour}"><title>{}: {v:.3}</title></rect>"#,
            y0.min(y1),
            slot * 0.7,
            (y1 - y0).abs(),
            escape(label)
        );
        let lx = x + slot * 0.35;
        let ly = H - MARGIN_B + 14.0;
        let _ = writeln!(
            out,
            r#"<text x="{lx:.1}" y="{ly:.1}" text-anchor="end" transform="rotate(-40 {lx:.1} {ly:.1})">{}</text>"#,
            escape(label)
        );
    }
    let _ = writeln!(
        out,
        r##"<line x1="{MARGIN_L}" x2="{}" y1="{:.1}" y2="{:.1}" stroke="#1a202c"/>"##,
        W - MARGIN_R,
        to_y(0.0),
        to_y(0.0)
    );
    out.push_str("</svg>\n");
    out
}

/// One polyline per series over shared x values.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, xs: &[f64], series: &[(String, Vec<f64>)]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let all = series.iter().flat_map(|(_, v)| v.iter().copied());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo.is_finite() { nice_range(lo, hi) } else { (0.0, 1.0) };
    y_axis(&mut out, lo, hi, y_label);
    let plot_w = W - MARGIN_L - MARGIN_R;
    let plot_h = H - MARGIN_T - MARGIN_B;
    let (xmin, xmax) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let (xmin, xmax) = if xmin.is_finite() && xmax > xmin { (xmin, xmax) } else { (xmin - 1.0, xmin + 1.0) };
    let to_x = |v: f64| MARGIN_L + plot_w * (v - xmin) / (xmax - xmin);
    let to_y = |v: f64| MARGIN_T + plot_h * (hi - v) / (hi - lo);
    for &x in xs {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{x}</text>"#,
            to_x(x),
            H - MARGIN_B + 16.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        MARGIN_L + plot_w / 2.0,
        H - MARGIN_B + 40.0,
        escape(x_label)
    );
    for (k, (name, ys)) in series.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let points: Vec<String> = xs.iter().zip(ys).map(|(&x, &y)| format!("{:.1},{:.1}", to_x(x), to_y(y))).collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#,
            points.join(" ")
        );
        for (&x, &y) in xs.iter().zip(ys) {
            let _ = writeln!(out, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{colour}"/>"#, to_x(x), to_y(y));
        }
        let ly = MARGIN_T + 14.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{:.1}" y="{:.1}" width="10" height="10" fill="{colour}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            W - MARGIN_R - 120.0,
            ly,
            W - MARGIN_R - 105.0,
            ly + 9.0,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}
