//! Minimal raster line charts: a light band for ±1 std, a light line for the
//! raw mean and a bold line for the smoothed mean.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};

pub const PALETTE: [[u8; 3]; 6] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
];

const WIDTH: u32 = 800;
const HEIGHT: u32 = 500;
const MARGIN: f64 = 40.0;
const AXIS: Rgb<u8> = Rgb([60, 60, 60]);

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub color: [u8; 3],
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Option<Vec<f64>>,
    pub smoothed: Vec<f64>,
}

fn lighten(c: [u8; 3], amount: f64) -> Rgb<u8> {
    Rgb(c.map(|v| (v as f64 + (255.0 - v as f64) * amount).round() as u8))
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        let span = (self.x1 - self.x0).max(f64::EPSILON);
        MARGIN + (x - self.x0) / span * (WIDTH as f64 - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        let span = (self.y1 - self.y0).max(f64::EPSILON);
        HEIGHT as f64 - MARGIN - (y - self.y0) / span * (HEIGHT as f64 - 2.0 * MARGIN)
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), radius: i64, c: Rgb<u8>) {
    let n = ((b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil() as usize).max(1);
    for i in 0..=n {
        let t = i as f64 / n as f64;
        let x = (a.0 + t * (b.0 - a.0)).round() as i64;
        let y = (a.1 + t * (b.1 - a.1)).round() as i64;
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                put(img, x + dx, y + dy, c);
            }
        }
    }
}

fn polyline(img: &mut RgbImage, frame: &Frame, xs: &[f64], ys: &[f64], radius: i64, c: Rgb<u8>) {
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).map(|(x, y)| (frame.px(*x), frame.py(*y))).collect();
    if pts.len() == 1 {
        line(img, pts[0], pts[0], radius, c);
    }
    for w in pts.windows(2) {
        line(img, w[0], w[1], radius, c);
    }
}

fn band(img: &mut RgbImage, frame: &Frame, xs: &[f64], lo: &[f64], hi: &[f64], c: Rgb<u8>) {
    for i in 0..xs.len().saturating_sub(1) {
        let (xa, xb) = (frame.px(xs[i]), frame.px(xs[i + 1]));
        let cols = (xb - xa).max(1.0).ceil() as usize;
        for j in 0..=cols {
            let t = j as f64 / cols as f64;
            let x = (xa + t * (xb - xa)).round() as i64;
            let top = frame.py(hi[i] + t * (hi[i + 1] - hi[i])).round() as i64;
            let bottom = frame.py(lo[i] + t * (lo[i + 1] - lo[i])).round() as i64;
            for y in top.min(bottom)..=top.max(bottom) {
                put(img, x, y, c);
            }
        }
    }
}

pub fn render(series: &[Series]) -> RgbImage {
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255]));
    let mut frame = Frame {
        x0: f64::INFINITY,
        x1: f64::NEG_INFINITY,
        y0: f64::INFINITY,
        y1: f64::NEG_INFINITY,
    };
    for s in series {
        for (i, x) in s.x.iter().enumerate() {
            let spread = s.std.as_ref().map_or(0.0, |v| v[i]);
            let ys = [s.mean[i] - spread, s.mean[i] + spread, s.smoothed[i]];
            frame.x0 = frame.x0.min(*x);
            frame.x1 = frame.x1.max(*x);
            for y in ys.into_iter().filter(|y| y.is_finite()) {
                frame.y0 = frame.y0.min(y);
                frame.y1 = frame.y1.max(y);
            }
        }
    }
    if !frame.x0.is_finite() || !frame.y0.is_finite() {
        frame = Frame {
            x0: 0.0,
            x1: 1.0,
            y0: 0.0,
            y1: 1.0,
        };
    }
    let pad = 0.05 * (frame.y1 - frame.y0).max(1e-9);
    frame.y0 -= pad;
    frame.y1 += pad;

    for s in series {
        if let Some(std) = &s.std {
            let lo: Vec<f64> = s.mean.iter().zip(std).map(|(m, d)| m - d).collect();
            let hi: Vec<f64> = s.mean.iter().zip(std).map(|(m, d)| m + d).collect();
            band(&mut img, &frame, &s.x, &lo, &hi, lighten(s.color, 0.8));
        }
    }
    for s in series {
        polyline(&mut img, &frame, &s.x, &s.mean, 0, lighten(s.color, 0.5));
    }
    for s in series {
        polyline(&mut img, &frame, &s.x, &s.smoothed, 1, Rgb(s.color));
    }

    let (l, r) = (MARGIN, WIDTH as f64 - MARGIN);
    let (t, b) = (MARGIN, HEIGHT as f64 - MARGIN);
    line(&mut img, (l, b), (r, b), 0, AXIS);
    line(&mut img, (l, t), (l, b), 0, AXIS);
    if frame.y0 < 0.0 && frame.y1 > 0.0 {
        let y0 = frame.py(0.0);
        let mut x = l;
        while x < r {
            line(&mut img, (x, y0), ((x + 4.0).min(r), y0), 0, AXIS);
            x += 8.0;
        }
    }
    img
}

pub fn save(path: &Path, series: &[Series]) -> Result<()> {
    render(series).save(path).map_err(|e| Error::Plot(format!("{}: {e}", path.display())))
}
