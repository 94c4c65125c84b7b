//! Time-contrastive image autoencoder.
//!
//! The encoder is a stack of stride-2 3×3 convolutions, a linear projection
//! to `d` values and an l2 normalization onto the unit sphere. The decoder
//! mirrors it with transposed convolutions and a sigmoid output. Training
//! combines the reconstruction error of the anchor frame with a triplet
//! term pulling temporally adjacent frames together and pushing a random
//! frame at least `alpha` away.

mod dataset;
mod train;
mod triplets;

pub use dataset::{read_dataset, write_dataset, ImageDataset};
pub use train::{train_embedding, EmbeddingTraining};
pub use triplets::{sample_triplets, FrameRef, Triplet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::nn::conv;
use crate::nn::linalg::{distance, l2_normalize, l2_normalize_backward};
pub use crate::nn::linalg::NORM_EPS;
use crate::nn::{Activation, Conv2d, ConvGeometry, ConvTranspose2d, Linear, ParamView, Parameters};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageShape {
    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// An `H × W × C` observation with values in `[0, 1]`, stored HWC.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    shape: ImageShape,
    pixels: Vec<f32>,
}

impl Image {
    pub fn new(shape: ImageShape, pixels: Vec<f32>) -> Result<Self> {
        if pixels.len() != shape.len() {
            return Err(Error::config(format!(
                "image of shape {shape:?} needs {} values, got {}",
                shape.len(),
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::config(format!("pixel value {bad} outside [0, 1]")));
        }
        Ok(Self { shape, pixels })
    }

    pub fn filled(shape: ImageShape, value: f32) -> Self {
        Self {
            shape,
            pixels: vec![value.clamp(0.0, 1.0); shape.len()],
        }
    }

    pub fn shape(&self) -> ImageShape {
        self.shape
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.pixels[(y * self.shape.width + x) * self.shape.channels + c]
    }

    /// Writes one pixel, clamped into `[0, 1]`.
    pub fn set(&mut self, y: usize, x: usize, c: usize, value: f32) {
        let i = (y * self.shape.width + x) * self.shape.channels + c;
        self.pixels[i] = value.clamp(0.0, 1.0);
    }

    fn extend_into(&self, out: &mut Vec<f64>) {
        out.extend(self.pixels.iter().map(|&v| v as f64));
    }
}

/// Unit-norm encoder output.
#[derive(Debug, Clone, PartialEq)]
pub struct Latent(Vec<f64>);

impl Latent {
    /// Projects `values` onto the unit sphere.
    pub fn normalized(mut values: Vec<f64>) -> Self {
        l2_normalize(&mut values);
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingConfig {
    pub latent_dim: usize,
    /// Output channels of each stride-2 convolution stage.
    pub conv_channels: Vec<usize>,
    /// Minimum latent distance demanded between an anchor and a random frame.
    pub alpha: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub holdout_fraction: f64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            latent_dim: 20,
            conv_channels: vec![16, 32, 32],
            alpha: 0.5,
            epochs: 200,
            batch_size: 64,
            lr: 1e-3,
            holdout_fraction: 0.1,
        }
    }
}

/// Encoder and decoder weights together with the geometry they were built for.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingParams {
    shape: ImageShape,
    latent_dim: usize,
    enc_convs: Vec<Conv2d>,
    enc_out: Linear,
    dec_in: Linear,
    // narrowest first
    dec_convs: Vec<ConvTranspose2d>,
}

struct EncoderTape {
    batch: usize,
    cols: Vec<Vec<f64>>,
    // post-ReLU output of every conv stage
    acts: Vec<Vec<f64>>,
    features: Vec<f64>,
    pre_norm: Vec<f64>,
    z: Vec<f64>,
}

struct DecoderTape {
    batch: usize,
    z: Vec<f64>,
    // acts[0] is the activated dec_in output; acts[i + 1] the output of dec_convs[i]
    acts: Vec<Vec<f64>>,
}

impl EmbeddingParams {
    pub fn new<R: Rng + ?Sized>(
        shape: ImageShape,
        latent_dim: usize,
        conv_channels: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        if shape.is_empty() || latent_dim == 0 || conv_channels.contains(&0) {
            return Err(Error::config("embedding sizes must be positive"));
        }
        let mut dims = vec![(shape.height, shape.width, shape.channels)];
        for &c in conv_channels {
            let (h, w, _) = *dims.last().unwrap();
            dims.push((conv::downsampled(h), conv::downsampled(w), c));
        }
        let enc_convs = (0..conv_channels.len())
            .map(|i| {
                let (h, w, cin) = dims[i];
                Conv2d::new(ConvGeometry::new(h, w), cin, dims[i + 1].2, &format!("enc.conv{i}"), rng)
            })
            .collect();
        let (h, w, c) = *dims.last().unwrap();
        let flat = h * w * c;
        let enc_out = Linear::init(flat, latent_dim, "enc.linear", None, rng);
        let dec_in = Linear::init(latent_dim, flat, "dec.linear", None, rng);
        let dec_convs = (0..conv_channels.len())
            .rev()
            .map(|i| {
                let (wh, ww, cout) = dims[i];
                ConvTranspose2d::new(ConvGeometry::new(wh, ww), dims[i + 1].2, cout, &format!("dec.conv{i}"), rng)
            })
            .collect();
        Ok(Self {
            shape,
            latent_dim,
            enc_convs,
            enc_out,
            dec_in,
            dec_convs,
        })
    }

    pub fn image_shape(&self) -> ImageShape {
        self.shape
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn conv_channels(&self) -> Vec<usize> {
        self.enc_convs.iter().map(|c| c.out_ch).collect()
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    /// Direct access to the encoder's final projection (used for hand-built configurations).
    pub fn encoder_linear_mut(&mut self) -> &mut Linear {
        &mut self.enc_out
    }

    pub fn decoder_linear_mut(&mut self) -> &mut Linear {
        &mut self.dec_in
    }

    fn check(&self, image: &Image) -> Result<()> {
        if image.shape != self.shape {
            return Err(Error::config(format!(
                "image shape {:?} does not match encoder shape {:?}",
                image.shape, self.shape
            )));
        }
        Ok(())
    }

    fn stack<'a>(&self, images: impl IntoIterator<Item = &'a Image>) -> Result<(Vec<f64>, usize)> {
        let mut x = Vec::new();
        let mut n = 0;
        for im in images {
            self.check(im)?;
            im.extend_into(&mut x);
            n += 1;
        }
        Ok((x, n))
    }

    pub fn encode(&self, image: &Image) -> Result<Latent> {
        self.check(image)?;
        let mut z = self.encode_batch(std::slice::from_ref(image))?;
        Ok(z.pop().unwrap())
    }

    pub fn encode_batch(&self, images: &[Image]) -> Result<Vec<Latent>> {
        let (x, n) = self.stack(images)?;
        let tape = self.encoder_forward(&x, n);
        Ok(tape.z.chunks_exact(self.latent_dim).map(|c| Latent(c.to_vec())).collect())
    }

    pub fn decode(&self, z: &[f64]) -> Result<Image> {
        if z.len() != self.latent_dim {
            return Err(Error::config(format!(
                "latent has {} values, decoder expects {}",
                z.len(),
                self.latent_dim
            )));
        }
        let tape = self.decoder_forward(z, 1);
        let pixels = tape.acts.last().unwrap().iter().map(|&v| v as f32).collect();
        Ok(Image {
            shape: self.shape,
            pixels,
        })
    }

    fn encoder_forward(&self, x: &[f64], batch: usize) -> EncoderTape {
        let mut cols = Vec::with_capacity(self.enc_convs.len());
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.enc_convs.len());
        for conv in &self.enc_convs {
            let input = acts.last().map(Vec::as_slice).unwrap_or(x);
            let (mut y, c) = conv.forward(input, batch);
            Activation::Relu.apply(&mut y);
            cols.push(c);
            acts.push(y);
        }
        let features = acts.last().cloned().unwrap_or_else(|| x.to_vec());
        let pre_norm = self.enc_out.forward(&features, batch);
        let mut z = pre_norm.clone();
        for row in z.chunks_exact_mut(self.latent_dim) {
            l2_normalize(row);
        }
        EncoderTape {
            batch,
            cols,
            acts,
            features,
            pre_norm,
            z,
        }
    }

    fn encoder_backward(&self, tape: &EncoderTape, grad_z: &[f64], grads: &mut EmbeddingParams) {
        let d = self.latent_dim;
        let mut gv = Vec::with_capacity(grad_z.len());
        for ((v, z), gz) in tape
            .pre_norm
            .chunks_exact(d)
            .zip(tape.z.chunks_exact(d))
            .zip(grad_z.chunks_exact(d))
        {
            gv.extend(l2_normalize_backward(v, z, gz));
        }
        let mut g = self
            .enc_out
            .backward(&tape.features, &gv, tape.batch, Some(&mut grads.enc_out), !self.enc_convs.is_empty());
        for i in (0..self.enc_convs.len()).rev() {
            let mut gi = g.take().expect("conv stages need an upstream gradient");
            Activation::Relu.backprop(&tape.acts[i], &mut gi);
            g = self.enc_convs[i].backward(&tape.cols[i], &gi, tape.batch, Some(&mut grads.enc_convs[i].params), i > 0);
        }
    }

    fn decoder_forward(&self, z: &[f64], batch: usize) -> DecoderTape {
        let last = if self.dec_convs.is_empty() {
            Activation::Sigmoid
        } else {
            Activation::Relu
        };
        let mut h = self.dec_in.forward(z, batch);
        last.apply(&mut h);
        let mut acts = vec![h];
        for (i, conv) in self.dec_convs.iter().enumerate() {
            let mut y = conv.forward(acts.last().unwrap(), batch);
            if i + 1 == self.dec_convs.len() {
                Activation::Sigmoid.apply(&mut y);
            } else {
                Activation::Relu.apply(&mut y);
            }
            acts.push(y);
        }
        DecoderTape {
            batch,
            z: z.to_vec(),
            acts,
        }
    }

    /// Returns the gradient with respect to the decoder input.
    fn decoder_backward(&self, tape: &DecoderTape, grad_out: &[f64], grads: &mut EmbeddingParams) -> Vec<f64> {
        let n = self.dec_convs.len();
        let mut g = grad_out.to_vec();
        for i in (0..n).rev() {
            let act = if i + 1 == n { Activation::Sigmoid } else { Activation::Relu };
            act.backprop(&tape.acts[i + 1], &mut g);
            g = self.dec_convs[i]
                .backward(&tape.acts[i], &g, tape.batch, Some(&mut grads.dec_convs[i].params), true)
                .unwrap();
        }
        let act = if n == 0 { Activation::Sigmoid } else { Activation::Relu };
        act.backprop(&tape.acts[0], &mut g);
        self.dec_in
            .backward(&tape.z, &g, tape.batch, Some(&mut grads.dec_in), true)
            .unwrap()
    }

    pub fn to_checkpoint(&self, alpha: f64) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new("embedding");
        ck.set("d", self.latent_dim)?;
        ck.set("H", self.shape.height)?;
        ck.set("W", self.shape.width)?;
        ck.set("C", self.shape.channels)?;
        ck.set("alpha", alpha)?;
        ck.set("conv_channels", self.conv_channels())?;
        ck.add_params("embedding", self);
        Ok(ck)
    }

    /// Rebuilds parameters from a checkpoint; also returns the stored `alpha`.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Self, f64)> {
        ck.expect_kind("embedding")?;
        let shape = ImageShape {
            height: ck.get("H")?,
            width: ck.get("W")?,
            channels: ck.get("C")?,
        };
        let channels: Vec<usize> = ck.get("conv_channels")?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut params = Self::new(shape, ck.get("d")?, &channels, &mut rng)?;
        ck.load_params("embedding", &mut params)?;
        Ok((params, ck.get("alpha")?))
    }
}

impl Parameters for EmbeddingParams {
    fn params(&self) -> Vec<ParamView<'_>> {
        let mut v: Vec<ParamView<'_>> = self.enc_convs.iter().flat_map(|c| c.params.views()).collect();
        v.extend(self.enc_out.views());
        v.extend(self.dec_in.views());
        v.extend(self.dec_convs.iter().flat_map(|c| c.params.views()));
        v
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = self.enc_convs.iter_mut().flat_map(|c| c.params.slots()).collect();
        v.extend(self.enc_out.slots());
        v.extend(self.dec_in.slots());
        v.extend(self.dec_convs.iter_mut().flat_map(|c| c.params.slots()));
        v
    }
}

/// `‖im − D(E(im))‖₂` over the flattened pixels.
pub fn loss_autoencoder(image: &Image, params: &EmbeddingParams) -> Result<f64> {
    let z = params.encode(image)?;
    let recon = params.decoder_forward(z.as_slice(), 1);
    let x: Vec<f64> = image.pixels.iter().map(|&v| v as f64).collect();
    Ok(distance(&x, recon.acts.last().unwrap()))
}

/// Reconstruction error between an image and an explicit reconstruction.
pub fn reconstruction_error(image: &Image, recon: &Image) -> f64 {
    image
        .pixels
        .iter()
        .zip(&recon.pixels)
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// `‖z_t − z_{t+1}‖ + max(alpha − ‖z_t − z_r‖, 0)` on precomputed latents.
pub fn contrastive_from_latents(anchor: &[f64], positive: &[f64], negative: &[f64], alpha: f64) -> f64 {
    distance(anchor, positive) + (alpha - distance(anchor, negative)).max(0.0)
}

pub fn loss_contrastive(triplet: &Triplet<'_>, params: &EmbeddingParams, alpha: f64) -> Result<f64> {
    if alpha <= 0.0 {
        return Err(Error::config(format!("alpha must be positive, got {alpha}")));
    }
    let z = params.encode_batch_refs(&[triplet.anchor, triplet.positive, triplet.negative])?;
    Ok(contrastive_from_latents(&z[0], &z[1], &z[2], alpha))
}

pub fn loss_total(triplet: &Triplet<'_>, params: &EmbeddingParams, alpha: f64) -> Result<f64> {
    Ok(loss_autoencoder(triplet.anchor, params)? + loss_contrastive(triplet, params, alpha)?)
}

impl EmbeddingParams {
    fn encode_batch_refs(&self, images: &[&Image]) -> Result<Vec<Vec<f64>>> {
        let (x, n) = self.stack(images.iter().copied())?;
        let tape = self.encoder_forward(&x, n);
        Ok(tape.z.chunks_exact(self.latent_dim).map(<[f64]>::to_vec).collect())
    }
}

/// Which terms of the training objective to include.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossTerms {
    pub autoencoder: bool,
    pub contrastive: bool,
}

impl LossTerms {
    pub const TOTAL: Self = Self {
        autoencoder: true,
        contrastive: true,
    };
    pub const AUTOENCODER: Self = Self {
        autoencoder: true,
        contrastive: false,
    };
    pub const CONTRASTIVE: Self = Self {
        autoencoder: false,
        contrastive: true,
    };
}

/// Mean loss over a batch of triplets and its gradient with respect to all parameters.
pub fn loss_and_grad(
    params: &EmbeddingParams,
    triplets: &[Triplet<'_>],
    alpha: f64,
    terms: LossTerms,
) -> Result<(f64, EmbeddingParams)> {
    let b = triplets.len();
    if b == 0 {
        return Err(Error::EmptyDataset("no triplets in batch".into()));
    }
    let d = params.latent_dim;
    let images = triplets
        .iter()
        .map(|t| t.anchor)
        .chain(triplets.iter().map(|t| t.positive))
        .chain(triplets.iter().map(|t| t.negative));
    let (x, n) = params.stack(images)?;
    let enc = params.encoder_forward(&x, n);
    let scale = 1.0 / b as f64;
    let mut grads = params.zeros_like();
    let mut grad_z = vec![0.0; 3 * b * d];
    let mut loss = 0.0;

    if terms.contrastive {
        for i in 0..b {
            let za = &enc.z[i * d..(i + 1) * d];
            let zp = &enc.z[(b + i) * d..(b + i + 1) * d];
            let zn = &enc.z[(2 * b + i) * d..(2 * b + i + 1) * d];
            let dp = distance(za, zp);
            let dn = distance(za, zn);
            loss += dp + (alpha - dn).max(0.0);
            if dp > 0.0 {
                for k in 0..d {
                    let g = scale * (za[k] - zp[k]) / dp;
                    grad_z[i * d + k] += g;
                    grad_z[(b + i) * d + k] -= g;
                }
            }
            if alpha - dn > 0.0 && dn > 0.0 {
                for k in 0..d {
                    let g = scale * (za[k] - zn[k]) / dn;
                    grad_z[i * d + k] -= g;
                    grad_z[(2 * b + i) * d + k] += g;
                }
            }
        }
    }

    if terms.autoencoder {
        let dec = params.decoder_forward(&enc.z[..b * d], b);
        let recon = dec.acts.last().unwrap();
        let plen = params.shape.len();
        let mut grad_recon = vec![0.0; b * plen];
        for i in 0..b {
            let xi = &x[i * plen..(i + 1) * plen];
            let ri = &recon[i * plen..(i + 1) * plen];
            let e = distance(xi, ri);
            loss += e;
            if e > 0.0 {
                for k in 0..plen {
                    grad_recon[i * plen + k] = scale * (ri[k] - xi[k]) / e;
                }
            }
        }
        let gz_dec = params.decoder_backward(&dec, &grad_recon, &mut grads);
        for (g, v) in grad_z[..b * d].iter_mut().zip(&gz_dec) {
            *g += v;
        }
    }

    params.encoder_backward(&enc, &grad_z, &mut grads);
    Ok((loss * scale, grads))
}

/// Mean loss without gradients.
pub fn mean_loss(params: &EmbeddingParams, triplets: &[Triplet<'_>], alpha: f64) -> Result<f64> {
    if triplets.is_empty() {
        return Err(Error::EmptyDataset("no triplets to evaluate".into()));
    }
    let d = params.latent_dim;
    let b = triplets.len();
    let images = triplets
        .iter()
        .map(|t| t.anchor)
        .chain(triplets.iter().map(|t| t.positive))
        .chain(triplets.iter().map(|t| t.negative));
    let (x, n) = params.stack(images)?;
    let enc = params.encoder_forward(&x, n);
    let dec = params.decoder_forward(&enc.z[..b * d], b);
    let recon = dec.acts.last().unwrap();
    let plen = params.shape.len();
    let mut loss = 0.0;
    for i in 0..b {
        let z = |k: usize| &enc.z[(k * b + i) * d..(k * b + i + 1) * d];
        loss += contrastive_from_latents(z(0), z(1), z(2), alpha);
        loss += distance(&x[i * plen..(i + 1) * plen], &recon[i * plen..(i + 1) * plen]);
    }
    Ok(loss / b as f64)
}

#[cfg(test)]
mod tests;
