//! DET curves on normal-deviate axes, as SVG and as a plain raster.

use std::fmt::Write as _;

use image::{Rgb, RgbImage};
use statrs::distribution::{ContinuousCDF, Normal};

use super::DetPoint;

const LO: f64 = 5e-4;
const HI: f64 = 0.5;
const TICKS: [f64; 8] = [0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2];
const SIZE: f64 = 480.0;
const MARGIN: f64 = 60.0;

const PALETTE: [(u8, u8, u8); 6] = [
    (31, 119, 180),
    (214, 39, 40),
    (44, 160, 44),
    (148, 103, 189),
    (255, 127, 14),
    (23, 190, 207),
];

fn probit(p: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    n.inverse_cdf(p.clamp(LO, HI))
}

/// Map a rate to `[0, 1]` along a normal-deviate axis.
fn axis(p: f64) -> f64 {
    let (a, b) = (probit(LO), probit(HI));
    (probit(p) - a) / (b - a)
}

fn to_px(apcer: f64, bpcer: f64) -> (f64, f64) {
    (MARGIN + axis(apcer) * SIZE, MARGIN + (1.0 - axis(bpcer)) * SIZE)
}

/// SVG document with one polyline per named curve.
pub fn det_plot_svg(title: &str, curves: &[(String, Vec<DetPoint>)]) -> String {
    let full = SIZE + 2.0 * MARGIN;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{full}" height="{full}" viewBox="0 0 {full} {full}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        full / 2.0,
        escape(title)
    );
    for t in TICKS {
        let v = axis(t) * SIZE;
        let label = format!("{}", t * 100.0);
        let _ = writeln!(
            s,
            r##"<line x1="{x}" y1="{MARGIN}" x2="{x}" y2="{b}" stroke="#ddd"/><text x="{x}" y="{ty}" text-anchor="middle">{label}</text>"##,
            x = MARGIN + v,
            b = MARGIN + SIZE,
            ty = MARGIN + SIZE + 14.0
        );
        let _ = writeln!(
            s,
            r##"<line x1="{MARGIN}" y1="{y}" x2="{r}" y2="{y}" stroke="#ddd"/><text x="{tx}" y="{y}" text-anchor="end">{label}</text>"##,
            y = MARGIN + SIZE - v,
            r = MARGIN + SIZE,
            tx = MARGIN - 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{SIZE}" height="{SIZE}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">APCER (%)</text>"#,
        full / 2.0,
        full - 20.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">BPCER (%)</text>"#,
        full / 2.0,
        full / 2.0
    );
    for (i, (name, curve)) in curves.iter().enumerate() {
        let (r, g, b) = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = curve
            .iter()
            .map(|p| {
                let (x, y) = to_px(p.apcer, p.bpcer);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="rgb({r},{g},{b})" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = MARGIN + 16.0 + 14.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" text-anchor="end" fill="rgb({r},{g},{b})">{}</text>"#,
            MARGIN + SIZE - 6.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Raster version of the same plot (grid, frame and curves, no text).
pub fn det_plot_png(curves: &[(String, Vec<DetPoint>)]) -> RgbImage {
    let full = (SIZE + 2.0 * MARGIN) as u32;
    let mut img = RgbImage::from_pixel(full, full, Rgb([255, 255, 255]));
    let grey = Rgb([221, 221, 221]);
    for t in TICKS {
        let v = axis(t) * SIZE;
        line(&mut img, (MARGIN + v, MARGIN), (MARGIN + v, MARGIN + SIZE), grey);
        line(&mut img, (MARGIN, MARGIN + SIZE - v), (MARGIN + SIZE, MARGIN + SIZE - v), grey);
    }
    let black = Rgb([0, 0, 0]);
    let (a, b) = (MARGIN, MARGIN + SIZE);
    for (p, q) in [((a, a), (b, a)), ((b, a), (b, b)), ((b, b), (a, b)), ((a, b), (a, a))] {
        line(&mut img, p, q, black);
    }
    for (i, (_, curve)) in curves.iter().enumerate() {
        let (r, g, bl) = PALETTE[i % PALETTE.len()];
        for w in curve.windows(2) {
            line(
                &mut img,
                to_px(w[0].apcer, w[0].bpcer),
                to_px(w[1].apcer, w[1].bpcer),
                Rgb([r, g, bl]),
            );
        }
    }
    img
}

fn line(img: &mut RgbImage, p: (f64, f64), q: (f64, f64), c: Rgb<u8>) {
    let steps = ((q.0 - p.0).abs().max((q.1 - p.1).abs()).ceil() as usize).max(1);
    for k in 0..=steps {
        let t = k as f64 / steps as f64;
        let x = (p.0 + t * (q.0 - p.0)).round();
        let y = (p.1 + t * (q.1 - p.1)).round();
        if x >= 0.0 && y >= 0.0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, c);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_is_monotone_and_bounded() {
        assert_eq!(axis(0.0), 0.0);
        assert!((axis(1.0) - 1.0).abs() < 1e-12);
        assert!(axis(0.01) < axis(0.1));
        assert!(probit(0.5).abs() < 1e-12);
    }

    #[test]
    fn plots_render() {
        let curve = vec![
            DetPoint {
                threshold: f64::NEG_INFINITY,
                apcer: 1.0,
                bpcer: 0.0,
            },
            DetPoint {
                threshold: 0.5,
                apcer: 0.1,
                bpcer: 0.05,
            },
            DetPoint {
                threshold: f64::INFINITY,
                apcer: 0.0,
                bpcer: 1.0,
            },
        ];
        let svg = det_plot_svg("p <x>", &[("a".into(), curve.clone())]);
        assert!(svg.starts_with("<svg") && svg.contains("polyline") && svg.contains("&lt;x&gt;"));
        let png = det_plot_png(&[("a".into(), curve)]);
        assert_eq!(png.width(), 600);
        assert!(png.pixels().any(|p| p.0 == [31, 119, 180]));
    }
}
