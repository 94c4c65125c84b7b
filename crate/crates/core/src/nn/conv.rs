//! 3×3, stride-2, padding-1 convolutions on NHWC batches, and their transposes.
//!
//! Both layers share one geometry: a "wide" feature map of `wide_h × wide_w`
//! and a "narrow" one of `ceil(wide_h / 2) × ceil(wide_w / 2)`. The
//! convolution maps wide to narrow; the transposed layer is its exact adjoint
//! and maps narrow back to wide.

use rand::Rng;

use super::linalg::{matmul, matmul_nt, matmul_tn};
use super::params::ParamView;

pub const KERNEL: usize = 3;
pub const STRIDE: usize = 2;
pub const PAD: usize = 1;

pub fn downsampled(len: usize) -> usize {
    (len + 2 * PAD - KERNEL) / STRIDE + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub wide_h: usize,
    pub wide_w: usize,
    pub narrow_h: usize,
    pub narrow_w: usize,
}

impl ConvGeometry {
    pub fn new(wide_h: usize, wide_w: usize) -> Self {
        Self {
            wide_h,
            wide_w,
            narrow_h: downsampled(wide_h),
            narrow_w: downsampled(wide_w),
        }
    }

    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize, usize)) {
        // f(narrow_index, tap_index, wide_y, wide_x)
        for oy in 0..self.narrow_h {
            for ox in 0..self.narrow_w {
                let row = oy * self.narrow_w + ox;
                for ky in 0..KERNEL {
                    let iy = (oy * STRIDE + ky) as isize - PAD as isize;
                    if iy < 0 || iy >= self.wide_h as isize {
                        continue;
                    }
                    for kx in 0..KERNEL {
                        let ix = (ox * STRIDE + kx) as isize - PAD as isize;
                        if ix < 0 || ix >= self.wide_w as isize {
                            continue;
                        }
                        f(row, ky * KERNEL + kx, iy as usize, ix as usize);
                    }
                }
            }
        }
    }

    /// Gathers wide-map patches into rows of `9 * channels` (tap-major, channel-minor).
    pub fn im2col(&self, x: &[f64], batch: usize, channels: usize) -> Vec<f64> {
        let rows = self.narrow_h * self.narrow_w;
        let width = KERNEL * KERNEL * channels;
        let plane = self.wide_h * self.wide_w * channels;
        let mut cols = vec![0.0; batch * rows * width];
        for b in 0..batch {
            let src = &x[b * plane..(b + 1) * plane];
            let dst = &mut cols[b * rows * width..(b + 1) * rows * width];
            self.for_each_tap(|row, tap, iy, ix| {
                let s = (iy * self.wide_w + ix) * channels;
                let d = row * width + tap * channels;
                dst[d..d + channels].copy_from_slice(&src[s..s + channels]);
            });
        }
        cols
    }

    /// Adjoint of [`im2col`](Self::im2col): scatter-adds patch rows onto the wide map.
    pub fn col2im(&self, cols: &[f64], batch: usize, channels: usize) -> Vec<f64> {
        let rows = self.narrow_h * self.narrow_w;
        let width = KERNEL * KERNEL * channels;
        let plane = self.wide_h * self.wide_w * channels;
        let mut x = vec![0.0; batch * plane];
        for b in 0..batch {
            let src = &cols[b * rows * width..(b + 1) * rows * width];
            let dst = &mut x[b * plane..(b + 1) * plane];
            self.for_each_tap(|row, tap, iy, ix| {
                let d = (iy * self.wide_w + ix) * channels;
                let s = row * width + tap * channels;
                for c in 0..channels {
                    dst[d + c] += src[s + c];
                }
            });
        }
        x
    }
}

/// Shared parameter storage for both layer kinds.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    weight_shape: [usize; 2],
    bias_shape: [usize; 1],
    names: [String; 2],
}

impl ConvParams {
    fn new<R: Rng + ?Sized>(rows: usize, cols: usize, bias: usize, fan_in: usize, name: &str, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        Self {
            weight: (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect(),
            bias: (0..bias).map(|_| rng.random_range(-bound..=bound)).collect(),
            weight_shape: [rows, cols],
            bias_shape: [bias],
            names: [format!("{name}.weight"), format!("{name}.bias")],
        }
    }

    pub(crate) fn views(&self) -> [ParamView<'_>; 2] {
        [
            ParamView {
                name: &self.names[0],
                shape: &self.weight_shape,
                data: &self.weight,
            },
            ParamView {
                name: &self.names[1],
                shape: &self.bias_shape,
                data: &self.bias,
            },
        ]
    }

    pub(crate) fn slots(&mut self) -> [&mut [f64]; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

/// Downsampling convolution. Weight is `out_ch × (9 · in_ch)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub geometry: ConvGeometry,
    pub in_ch: usize,
    pub out_ch: usize,
    pub params: ConvParams,
}

impl Conv2d {
    pub fn new<R: Rng + ?Sized>(
        geometry: ConvGeometry,
        in_ch: usize,
        out_ch: usize,
        name: &str,
        rng: &mut R,
    ) -> Self {
        let fan_in = KERNEL * KERNEL * in_ch;
        Self {
            geometry,
            in_ch,
            out_ch,
            params: ConvParams::new(out_ch, fan_in, out_ch, fan_in, name, rng),
        }
    }

    pub fn output_len(&self) -> usize {
        self.geometry.narrow_h * self.geometry.narrow_w * self.out_ch
    }

    /// Returns `(output, im2col buffer)`; keep the buffer for the backward pass.
    pub fn forward(&self, x: &[f64], batch: usize) -> (Vec<f64>, Vec<f64>) {
        let cols = self.geometry.im2col(x, batch, self.in_ch);
        let rows = batch * self.geometry.narrow_h * self.geometry.narrow_w;
        let mut y = vec![0.0; rows * self.out_ch];
        for r in y.chunks_exact_mut(self.out_ch) {
            r.copy_from_slice(&self.params.bias);
        }
        matmul_nt(&cols, &self.params.weight, &mut y, rows, KERNEL * KERNEL * self.in_ch, self.out_ch, true);
        (y, cols)
    }

    pub fn backward(
        &self,
        cols: &[f64],
        grad_out: &[f64],
        batch: usize,
        grads: Option<&mut ConvParams>,
        want_input: bool,
    ) -> Option<Vec<f64>> {
        let rows = batch * self.geometry.narrow_h * self.geometry.narrow_w;
        let width = KERNEL * KERNEL * self.in_ch;
        if let Some(g) = grads {
            matmul_tn(grad_out, cols, &mut g.weight, self.out_ch, rows, width, true);
            for r in grad_out.chunks_exact(self.out_ch) {
                for (b, v) in g.bias.iter_mut().zip(r) {
                    *b += v;
                }
            }
        }
        want_input.then(|| {
            let mut gcols = vec![0.0; rows * width];
            matmul(grad_out, &self.params.weight, &mut gcols, rows, self.out_ch, width, false);
            self.geometry.col2im(&gcols, batch, self.in_ch)
        })
    }
}

/// Upsampling transposed convolution, narrow → wide. Weight is `in_ch × (9 · out_ch)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvTranspose2d {
    pub geometry: ConvGeometry,
    pub in_ch: usize,
    pub out_ch: usize,
    pub params: ConvParams,
}

impl ConvTranspose2d {
    pub fn new<R: Rng + ?Sized>(
        geometry: ConvGeometry,
        in_ch: usize,
        out_ch: usize,
        name: &str,
        rng: &mut R,
    ) -> Self {
        // each wide pixel receives at most 4 taps from stride-2 upsampling
        let fan_in = 4 * in_ch;
        Self {
            geometry,
            in_ch,
            out_ch,
            params: ConvParams::new(in_ch, KERNEL * KERNEL * out_ch, out_ch, fan_in, name, rng),
        }
    }

    pub fn output_len(&self) -> usize {
        self.geometry.wide_h * self.geometry.wide_w * self.out_ch
    }

    pub fn forward(&self, x: &[f64], batch: usize) -> Vec<f64> {
        let rows = batch * self.geometry.narrow_h * self.geometry.narrow_w;
        let width = KERNEL * KERNEL * self.out_ch;
        let mut cols = vec![0.0; rows * width];
        matmul(x, &self.params.weight, &mut cols, rows, self.in_ch, width, false);
        let mut y = self.geometry.col2im(&cols, batch, self.out_ch);
        for px in y.chunks_exact_mut(self.out_ch) {
            for (v, b) in px.iter_mut().zip(&self.params.bias) {
                *v += b;
            }
        }
        y
    }

    pub fn backward(
        &self,
        x: &[f64],
        grad_out: &[f64],
        batch: usize,
        grads: Option<&mut ConvParams>,
        want_input: bool,
    ) -> Option<Vec<f64>> {
        let rows = batch * self.geometry.narrow_h * self.geometry.narrow_w;
        let width = KERNEL * KERNEL * self.out_ch;
        let gcols = self.geometry.im2col(grad_out, batch, self.out_ch);
        if let Some(g) = grads {
            matmul_tn(x, &gcols, &mut g.weight, self.in_ch, rows, width, true);
            for px in grad_out.chunks_exact(self.out_ch) {
                for (b, v) in g.bias.iter_mut().zip(px) {
                    *b += v;
                }
            }
        }
        want_input.then(|| {
            let mut gx = vec![0.0; rows * self.in_ch];
            matmul_nt(&gcols, &self.params.weight, &mut gx, rows, width, self.in_ch, false);
            gx
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::linalg::dot;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn downsampling_sizes() {
        assert_eq!(downsampled(64), 32);
        assert_eq!(downsampled(4), 2);
        assert_eq!(downsampled(2), 1);
        assert_eq!(downsampled(1), 1);
        assert_eq!(downsampled(5), 3);
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = ConvGeometry::new(5, 6);
        let (batch, ch) = (2, 3);
        let x: Vec<f64> = (0..batch * 5 * 6 * ch).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cols = g.im2col(&x, batch, ch);
        let y: Vec<f64> = (0..cols.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let back = g.col2im(&y, batch, ch);
        assert!((dot(&cols, &y) - dot(&x, &back)).abs() < 1e-12);
    }

    #[test]
    fn transpose_forward_is_adjoint_of_conv_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = ConvGeometry::new(6, 5);
        let mut conv = Conv2d::new(g, 2, 3, "c", &mut rng);
        conv.params.bias.fill(0.0);
        let mut tr = ConvTranspose2d::new(g, 3, 2, "t", &mut rng);
        tr.params.bias.fill(0.0);
        // same linear map, transposed storage
        for o in 0..3 {
            for t in 0..9 {
                for c in 0..2 {
                    tr.params.weight[o * 18 + t * 2 + c] = conv.params.weight[o * 18 + t * 2 + c];
                }
            }
        }
        let x: Vec<f64> = (0..6 * 5 * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let u: Vec<f64> = (0..g.narrow_h * g.narrow_w * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (cx, _) = conv.forward(&x, 1);
        let tu = tr.forward(&u, 1);
        assert!((dot(&cx, &u) - dot(&x, &tu)).abs() < 1e-12);
    }
}
