//! Log-log variogram plot as a standalone SVG document.

use std::fmt::Write;

use mfbm_core::regularity::{HolderFit, Variogram};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 64.0;
const COLORS: [&str; 3] = ["#1f77b4", "#d62728", "#2ca02c"];

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, lx: f64) -> f64 {
        MARGIN + (lx - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, ly: f64) -> f64 {
        HEIGHT - MARGIN - (ly - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    let pad = ((hi - lo) * 0.08).max(0.05);
    (lo - pad, hi + pad)
}

fn line(out: &mut String, f: &Frame, slope: f64, intercept: f64, style: &str) {
    let (x0, x1) = f.x;
    let _ = writeln!(
        out,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" {style}/>"#,
        f.px(x0),
        f.py(intercept + slope * x0),
        f.px(x1),
        f.py(intercept + slope * x1)
    );
}

/// Points for every variogram, its fitted line, and a dashed reference line
/// of slope `4H − 3` through the centre of the first fit window.
pub fn variogram_svg(curves: &[(&Variogram, &HolderFit)]) -> String {
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    for (v, _) in curves {
        for (&d, &val) in v.lags.iter().zip(&v.values) {
            if d > 0.0 && val > 0.0 {
                lx.push(d.log10());
                ly.push(val.log10());
            }
        }
    }
    let min = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let frame = if lx.is_empty() {
        Frame { x: (-1.0, 0.0), y: (-1.0, 0.0) }
    } else {
        Frame { x: padded(min(&lx), max(&lx)), y: padded(min(&ly), max(&ly)) }
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<g font-family="sans-serif" font-size="12"><text x="{:.2}" y="24" text-anchor="middle">variogram of the drift derivative</text>"#,
        WIDTH / 2.0
    );
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        s,
        r#"<rect x="{l}" y="{t}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        r - l,
        b - t
    );
    for k in 0..=4 {
        let fx = frame.x.0 + (frame.x.1 - frame.x.0) * k as f64 / 4.0;
        let fy = frame.y.0 + (frame.y.1 - frame.y.0) * k as f64 / 4.0;
        let (x, y) = (frame.px(fx), frame.py(fy));
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{b}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, b + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{:.3e}</text>"#, b + 20.0, 10f64.powf(fx));
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{y:.2}" x2="{l}" y2="{y:.2}" stroke="black"/>"#, l - 5.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:.3e}</text>"#, l - 8.0, y + 4.0, 10f64.powf(fy));
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">lag δ</text>"#, WIDTH / 2.0, HEIGHT - 16.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">E(φ(t0+δ) − φ(t0))²</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    let _ = writeln!(s, r#"<clipPath id="plot"><rect x="{l}" y="{t}" width="{:.2}" height="{:.2}"/></clipPath>"#, r - l, b - t);
    let _ = writeln!(s, r#"<g clip-path="url(#plot)">"#);
    for (i, (v, fit)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        for (&d, &val) in v.lags.iter().zip(&v.values) {
            if d > 0.0 && val > 0.0 {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}"/>"#,
                    frame.px(d.log10()),
                    frame.py(val.log10())
                );
            }
        }
        // natural-log fit expressed in base 10
        let intercept = fit.intercept / std::f64::consts::LN_10;
        line(&mut s, &frame, fit.slope, intercept, &format!(r#"stroke="{color}" stroke-width="1.5""#));
    }
    if let Some((v, fit)) = curves.first() {
        let (lo, hi) = fit.lag_window;
        let cx = 0.5 * (lo.log10() + hi.log10());
        let cy = (fit.intercept / std::f64::consts::LN_10) + fit.slope * cx;
        let target = 4.0 * v.h - 3.0;
        line(&mut s, &frame, target, cy - target * cx, r#"stroke="gray" stroke-dasharray="6 4""#);
    }
    let _ = writeln!(s, "</g>");
    for (i, (v, fit)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let y = t + 18.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{y:.2}" fill="{color}">{}: slope {:.4}</text>"#,
            l + 10.0,
            v.method,
            fit.slope
        );
    }
    if let Some((v, _)) = curves.first() {
        let y = t + 18.0 + 16.0 * curves.len() as f64;
        let _ = writeln!(s, r#"<text x="{:.2}" y="{y:.2}" fill="gray">reference: slope {:.4}</text>"#, l + 10.0, 4.0 * v.h - 3.0);
    }
    let _ = writeln!(s, "</g>\n</svg>");
    s
}
