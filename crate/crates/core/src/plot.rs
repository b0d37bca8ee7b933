//! Minimal standalone SVG charts: step CDFs and histograms.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        let (x0, x1) = if x1 > x0 { (x0, x1) } else { (x0 - 0.5, x0 + 0.5) };
        let (y0, y1) = if y1 > y0 { (y0, y1) } else { (y0, y0 + 1.0) };
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn open(out: &mut String, title: &str, xlabel: &str, ylabel: &str, f: &Frame) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(title));
    let (l, r, b, t) = (MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN);
    let _ = writeln!(out, r#"<path d="M{l},{t} L{l},{b} L{r},{b}" fill="none" stroke="black"/>"#);
    for i in 0..=4 {
        let fx = f.x0 + (f.x1 - f.x0) * i as f64 / 4.0;
        let fy = f.y0 + (f.y1 - f.y0) * i as f64 / 4.0;
        let _ = writeln!(out, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, f.px(fx), b + 16.0, tick(fx));
        let _ = writeln!(out, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, l - 6.0, f.py(fy) + 4.0, tick(fy));
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 14.0, escape(xlabel));
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(ylabel)
    );
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.round() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

/// Step plot of empirical CDF points `(x, P(X ≤ x))`.
pub fn cdf_svg(points: &[(f64, f64)], title: &str, xlabel: &str) -> String {
    let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let f = if points.is_empty() { Frame::new(0.0, 1.0, 0.0, 1.0) } else { Frame::new(lo, hi, 0.0, 1.0) };
    let mut out = String::new();
    open(&mut out, title, xlabel, "cumulative fraction", &f);
    if !points.is_empty() {
        let mut d = format!("M{:.2},{:.2}", f.px(f.x0), f.py(0.0));
        let mut prev = 0.0;
        for &(x, p) in points {
            let _ = write!(d, " L{:.2},{:.2} L{:.2},{:.2}", f.px(x), f.py(prev), f.px(x), f.py(p));
            prev = p;
        }
        let _ = write!(d, " L{:.2},{:.2}", f.px(f.x1), f.py(prev));
        let _ = writeln!(out, r##"<path d="{d}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##);
        if lo < 0.0 && hi > 0.0 {
            let _ = writeln!(
                out,
                r##"<line x1="{0:.2}" y1="{1}" x2="{0:.2}" y2="{2}" stroke="#999" stroke-dasharray="4 3"/>"##,
                f.px(0.0),
                MARGIN,
                HEIGHT - MARGIN
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Bar chart of bin counts over `[lo, hi)`.
pub fn histogram_svg(counts: &[usize], lo: f64, hi: f64, title: &str, xlabel: &str) -> String {
    let max = counts.iter().copied().max().unwrap_or(0) as f64;
    let f = Frame::new(lo, hi, 0.0, max.max(1.0));
    let mut out = String::new();
    open(&mut out, title, xlabel, "count", &f);
    let w = (hi - lo) / counts.len().max(1) as f64;
    for (i, &c) in counts.iter().enumerate() {
        let (a, b) = (lo + i as f64 * w, lo + (i + 1) as f64 * w);
        let (x, y) = (f.px(a), f.py(c as f64));
        let _ = writeln!(
            out,
            r##"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="#4c72b0" stroke="white"/>"##,
            f.px(b) - x,
            f.py(0.0) - y
        );
    }
    out.push_str("</svg>\n");
    out
}
