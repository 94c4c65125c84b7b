//! Minimal raster drawing into [`Image`] buffers.

use crate::embedding::{Image, ImageShape};

pub type Color = [f32; 3];

/// Channel values of `color` for an image with `channels` channels.
fn shade(color: Color, channels: usize) -> Vec<f32> {
    match channels {
        3 => color.to_vec(),
        c => vec![(color[0] + color[1] + color[2]) / 3.0; c],
    }
}

pub struct Canvas {
    image: Image,
}

impl Canvas {
    pub fn new(shape: ImageShape, background: Color) -> Self {
        let mut image = Image::filled(shape, 0.0);
        let px = shade(background, shape.channels);
        for y in 0..shape.height {
            for x in 0..shape.width {
                for (c, v) in px.iter().enumerate() {
                    image.set(y, x, c, *v);
                }
            }
        }
        Self { image }
    }

    /// Fills pixels whose centres satisfy `inside(u, v)`, with `u` rightward
    /// and `v` upward, both in `[0, 1]`.
    pub fn fill_where(&mut self, color: Color, inside: impl Fn(f64, f64) -> bool) {
        let s = self.image.shape();
        let px = shade(color, s.channels);
        for row in 0..s.height {
            let v = 1.0 - (row as f64 + 0.5) / s.height as f64;
            for col in 0..s.width {
                let u = (col as f64 + 0.5) / s.width as f64;
                if inside(u, v) {
                    for (c, val) in px.iter().enumerate() {
                        self.image.set(row, col, c, *val);
                    }
                }
            }
        }
    }

    /// A disc of `radius` pixels centred at unit coordinates `(u, v)`.
    pub fn disc(&mut self, u: f64, v: f64, radius: f64, color: Color) {
        let s = self.image.shape();
        let (cx, cy) = (u * s.width as f64, (1.0 - v) * s.height as f64);
        let (w, h) = (s.width as f64, s.height as f64);
        self.fill_where(color, |pu, pv| {
            let (dx, dy) = (pu * w - cx, (1.0 - pv) * h - cy);
            dx * dx + dy * dy <= radius * radius
        });
    }

    pub fn finish(self) -> Image {
        self.image
    }
}

/// Centroid in unit coordinates of pixels whose first channel equals `value`.
#[cfg(test)]
pub fn centroid(image: &Image, value: f32) -> Option<(f64, f64)> {
    let s = image.shape();
    let (mut su, mut sv, mut n) = (0.0, 0.0, 0usize);
    for row in 0..s.height {
        for col in 0..s.width {
            if (image.get(row, col, 0) - value).abs() < 1e-6 {
                su += (col as f64 + 0.5) / s.width as f64;
                sv += 1.0 - (row as f64 + 0.5) / s.height as f64;
                n += 1;
            }
        }
    }
    (n > 0).then(|| (su / n as f64, sv / n as f64))
}
