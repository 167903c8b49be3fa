use std::fmt::Write as _;

use super::ExplanationMap;
use crate::numfmt::fmt9;

const CELL_W: f64 = 6.0;
const CELL_H: f64 = 14.0;
const LABEL_W: f64 = 150.0;
const TOP: f64 = 30.0;

pub fn csv(map: &ExplanationMap) -> String {
    let mut out = String::from("row_label");
    for c in &map.column_labels {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (label, row) in map.row_labels.iter().zip(&map.values) {
        out.push_str(label);
        for v in row {
            out.push(',');
            out.push_str(&fmt9(*v));
        }
        out.push('\n');
    }
    out
}

fn lerp(a: (f64, f64, f64), b: (f64, f64, f64), t: f64) -> String {
    let mix = |x: f64, y: f64| (x + (y - x) * t).round().clamp(0.0, 255.0) as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

const BLUE: (f64, f64, f64) = (33.0, 102.0, 172.0);
const WHITE: (f64, f64, f64) = (247.0, 247.0, 247.0);
const RED: (f64, f64, f64) = (178.0, 24.0, 43.0);
const PALE: (f64, f64, f64) = (255.0, 247.0, 236.0);
const DARK: (f64, f64, f64) = (127.0, 0.0, 0.0);

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Heatmap with a blue-white-red scale centred on 0 for signed maps and a
/// pale-to-dark sequential scale otherwise.
pub fn svg(map: &ExplanationMap) -> String {
    let (rows, cols) = map.shape();
    let cell_w = if cols <= 4 { 40.0 } else { CELL_W };
    let width = LABEL_W + cols as f64 * cell_w + 10.0;
    let height = TOP + rows as f64 * CELL_H + 10.0;
    let flat = map.values.iter().flatten();
    let (lo, hi) = flat.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let scale = lo.abs().max(hi.abs());
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="10">"#);
    let _ = writeln!(s, r#"<text x="4" y="16">{} ({}; {} cases)</text>"#, map.method.name(), escape(&map.aggregation), map.cases);
    for (r, (label, row)) in map.row_labels.iter().zip(&map.values).enumerate() {
        let y = TOP + r as f64 * CELL_H;
        let _ = writeln!(s, r#"<text x="4" y="{}">{}</text>"#, y + CELL_H - 3.0, escape(label));
        for (c, &v) in row.iter().enumerate() {
            let fill = if map.method.diverging() {
                let t = if scale > 0.0 { v / scale } else { 0.0 };
                if t >= 0.0 { lerp(WHITE, RED, t) } else { lerp(WHITE, BLUE, -t) }
            } else {
                let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
                lerp(PALE, DARK, t)
            };
            let x = LABEL_W + c as f64 * cell_w;
            let _ = writeln!(s, r#"<rect x="{x}" y="{y}" width="{cell_w}" height="{CELL_H}" fill="{fill}"/>"#);
        }
    }
    s.push_str("</svg>\n");
    s
}
