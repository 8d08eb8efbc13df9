//! Minimal hand-written SVG charts: horizontal bars, a boxplot and a
//! correlation heatmap.

use std::fmt::Write;

use super::stats::{CorrelationMatrix, FiveNumber};

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         font-family=\"sans-serif\" font-size=\"11\">\n"
    )
}

/// Horizontal bar chart, bars drawn top to bottom in the given order.
pub fn bar_chart(title: &str, items: &[(String, f64)]) -> String {
    let label_w = 180.0;
    let bar_w = 420.0;
    let row_h = 18.0;
    let top = 30.0;
    let height = top + row_h * items.len() as f64 + 20.0;
    let max = items.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max);
    let scale = if max > 0.0 { bar_w / max } else { 0.0 };

    let mut s = header(label_w + bar_w + 90.0, height);
    let _ = writeln!(s, "<text x=\"10\" y=\"18\" font-size=\"13\">{}</text>", escape(title));
    for (i, (name, v)) in items.iter().enumerate() {
        let y = top + row_h * i as f64;
        let len = v.abs() * scale;
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
            label_w - 6.0,
            y + 12.0,
            escape(name)
        );
        let _ = writeln!(
            s,
            "<rect x=\"{label_w:.1}\" y=\"{:.1}\" width=\"{len:.2}\" height=\"{:.1}\" fill=\"#1f77b4\"/>",
            y + 2.0,
            row_h - 4.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\">{v:.4}</text>",
            label_w + len + 4.0,
            y + 12.0
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Single vertical boxplot with whiskers at min and max.
pub fn boxplot(title: &str, f: &FiveNumber) -> String {
    let (w, h, pad) = (240.0, 420.0, 40.0);
    let span = (f.max - f.min).max(f64::EPSILON);
    let y = |v: f64| h - pad - (v - f.min) / span * (h - 2.0 * pad);
    let cx = w / 2.0;
    let mut s = header(w, h);
    let _ = writeln!(s, "<text x=\"10\" y=\"18\" font-size=\"13\">{}</text>", escape(title));
    let _ = writeln!(
        s,
        "<line x1=\"{cx}\" y1=\"{:.2}\" x2=\"{cx}\" y2=\"{:.2}\" stroke=\"black\"/>",
        y(f.max),
        y(f.min)
    );
    let _ = writeln!(
        s,
        "<rect x=\"{:.1}\" y=\"{:.2}\" width=\"80\" height=\"{:.2}\" fill=\"#dddddd\" stroke=\"black\"/>",
        cx - 40.0,
        y(f.q3),
        (y(f.q1) - y(f.q3)).max(0.5)
    );
    let _ = writeln!(
        s,
        "<line x1=\"{:.1}\" y1=\"{:.2}\" x2=\"{:.1}\" y2=\"{:.2}\" stroke=\"green\" stroke-width=\"2\"/>",
        cx - 40.0,
        y(f.median),
        cx + 40.0,
        y(f.median)
    );
    for (label, v) in [("min", f.min), ("q1", f.q1), ("median", f.median), ("q3", f.q3), ("max", f.max)] {
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.2}\">{label} {v:.2}</text>",
            cx + 46.0,
            y(v) + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Blue (negative) to red (positive) heatmap of a correlation matrix.
pub fn heatmap(title: &str, m: &CorrelationMatrix) -> String {
    let k = m.names.len();
    let cell = 16.0;
    let left = 170.0;
    let top = 170.0;
    let size = left + cell * k as f64 + 20.0;
    let mut s = header(size, size);
    let _ = writeln!(s, "<text x=\"10\" y=\"18\" font-size=\"13\">{}</text>", escape(title));
    for (i, name) in m.names.iter().enumerate() {
        let y = top + cell * i as f64;
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
            left - 4.0,
            y + 12.0,
            escape(name)
        );
        let x = left + cell * i as f64 + 12.0;
        let _ = writeln!(
            s,
            "<text transform=\"translate({x:.1},{:.1}) rotate(-90)\">{}</text>",
            top - 4.0,
            escape(name)
        );
        for j in 0..k {
            let r = m.get(i, j);
            let (red, green, blue) = if r >= 0.0 {
                (255.0, 255.0 * (1.0 - r), 255.0 * (1.0 - r))
            } else {
                (255.0 * (1.0 + r), 255.0 * (1.0 + r), 255.0)
            };
            let _ = writeln!(
                s,
                "<rect x=\"{:.1}\" y=\"{y:.1}\" width=\"{cell}\" height=\"{cell}\" \
                 fill=\"rgb({:.0},{:.0},{:.0})\"><title>{:.3}</title></rect>",
                left + cell * j as f64,
                red,
                green,
                blue,
                r
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
