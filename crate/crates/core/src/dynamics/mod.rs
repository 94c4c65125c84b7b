//! Latent forward model.
//!
//! A fully connected network Ψ̄ reads a stack of `k` unit-norm frame
//! embeddings (oldest first) plus an action and predicts the embedding of the
//! next frame. [`DynamicsParams::predict`] shifts the stack by one block and
//! appends the renormalized prediction, so repeated application unrolls latent
//! trajectories on the sphere.

mod train;

pub use train::{train_dynamics, DynamicsTrainer, DynamicsTraining};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::embedding::Latent;
use crate::error::{Error, Result};
use crate::nn::linalg::{l2_normalize, l2_normalize_backward, norm};
use crate::nn::{Activation, Mlp, ParamView, Parameters};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub batch_size: usize,
    /// Gradient steps taken after every training episode.
    pub steps_per_episode: usize,
    /// Gradient steps on the demonstration data before the first episode.
    pub pretrain_steps: usize,
    pub holdout_fraction: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            hidden: vec![400, 400],
            lr: 1e-3,
            batch_size: 64,
            steps_per_episode: 200,
            pretrain_steps: 2000,
            holdout_fraction: 0.1,
        }
    }
}

/// `k` consecutive embeddings of dimension `d`, oldest first, flattened.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedLatent {
    dim: usize,
    values: Vec<f64>,
}

impl StackedLatent {
    pub fn new(values: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || values.is_empty() || !values.len().is_multiple_of(dim) {
            return Err(Error::config(format!(
                "{} values do not split into blocks of {dim}",
                values.len()
            )));
        }
        Ok(Self { dim, values })
    }

    pub fn from_blocks(blocks: &[Latent]) -> Result<Self> {
        let dim = blocks.first().map(Latent::dim).unwrap_or(0);
        if blocks.iter().any(|b| b.dim() != dim) {
            return Err(Error::config("stacked latents differ in dimension"));
        }
        Self::new(blocks.iter().flat_map(|b| b.as_slice().iter().copied()).collect(), dim)
    }

    /// A stack holding `k` copies of one embedding, used at episode start.
    pub fn repeated(z: &Latent, k: usize) -> Result<Self> {
        Self::new(z.as_slice().repeat(k), z.dim())
    }

    /// Drops the oldest block and appends `z`.
    pub fn push(&self, z: &[f64]) -> Result<Self> {
        if z.len() != self.dim {
            return Err(Error::config(format!("block has {} values, expected {}", z.len(), self.dim)));
        }
        let mut values = Vec::with_capacity(self.values.len());
        values.extend_from_slice(&self.values[self.dim..]);
        values.extend_from_slice(z);
        Ok(Self { dim: self.dim, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn stack(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn latest(&self) -> &[f64] {
        self.block(self.stack() - 1)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

/// A differentiable map from (state, action) batches to next states.
///
/// States and actions are row-major flat batches.
pub trait LatentDynamics {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn step_batch(&self, z: &[f64], a: &[f64], batch: usize) -> Vec<f64>;
    /// Pulls `∂L/∂next` back to `(∂L/∂z, ∂L/∂a)`.
    fn step_vjp_batch(&self, z: &[f64], a: &[f64], batch: usize, grad_next: &[f64]) -> (Vec<f64>, Vec<f64>);
}

/// Ψ̄ with its stacking geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsParams {
    stack: usize,
    latent_dim: usize,
    action_dim: usize,
    net: Mlp,
}

impl DynamicsParams {
    pub fn new<R: Rng + ?Sized>(
        stack: usize,
        latent_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        if stack == 0 || latent_dim == 0 || action_dim == 0 || hidden.contains(&0) {
            return Err(Error::config("dynamics sizes must be positive"));
        }
        let mut sizes = vec![stack * latent_dim + action_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(latent_dim);
        Ok(Self {
            stack,
            latent_dim,
            action_dim,
            net: Mlp::new(&sizes, Activation::Identity, None, rng),
        })
    }

    pub fn stack(&self) -> usize {
        self.stack
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn hidden(&self) -> Vec<usize> {
        let s = self.net.sizes();
        s[1..s.len() - 1].to_vec()
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    fn state_len(&self) -> usize {
        self.stack * self.latent_dim
    }

    fn check(&self, z: &StackedLatent, a: &[f64]) -> Result<()> {
        if z.dim() != self.latent_dim || z.stack() != self.stack || a.len() != self.action_dim {
            return Err(Error::config(format!(
                "dynamics expects {}×{} latents and {} actions, got {}×{} and {}",
                self.stack,
                self.latent_dim,
                self.action_dim,
                z.stack(),
                z.dim(),
                a.len()
            )));
        }
        Ok(())
    }

    fn inputs(&self, z: &[f64], a: &[f64], batch: usize) -> Vec<f64> {
        let (s, m) = (self.state_len(), self.action_dim);
        debug_assert_eq!(z.len(), batch * s);
        debug_assert_eq!(a.len(), batch * m);
        let mut x = Vec::with_capacity(batch * (s + m));
        for (zr, ar) in z.chunks_exact(s).zip(a.chunks_exact(m)) {
            x.extend_from_slice(zr);
            x.extend_from_slice(ar);
        }
        x
    }

    /// Raw network output Ψ̄(Z, a) for a batch, `batch × d`.
    pub fn raw_batch(&self, z: &[f64], a: &[f64], batch: usize) -> Vec<f64> {
        self.net.forward(&self.inputs(z, a, batch), batch)
    }

    pub fn raw(&self, z: &StackedLatent, a: &[f64]) -> Result<Vec<f64>> {
        self.check(z, a)?;
        Ok(self.raw_batch(z.as_slice(), a, 1))
    }

    fn shift(&self, z: &[f64], raw: Vec<f64>, batch: usize) -> Vec<f64> {
        let (s, d) = (self.state_len(), self.latent_dim);
        let mut out = Vec::with_capacity(batch * s);
        for (zr, mut r) in z.chunks_exact(s).zip(raw.chunks_exact(d).map(<[f64]>::to_vec)) {
            out.extend_from_slice(&zr[d..]);
            l2_normalize(&mut r);
            out.extend_from_slice(&r);
        }
        out
    }

    pub fn predict(&self, z: &StackedLatent, a: &[f64]) -> Result<StackedLatent> {
        self.check(z, a)?;
        let next = self.step_batch(z.as_slice(), a, 1);
        Ok(StackedLatent {
            dim: self.latent_dim,
            values: next,
        })
    }

    /// `[Z0, predict(Z0, a0), ...]`, one entry longer than `actions`.
    pub fn rollout(&self, z0: &StackedLatent, actions: &[Vec<f64>]) -> Result<Vec<StackedLatent>> {
        let mut out = Vec::with_capacity(actions.len() + 1);
        out.push(z0.clone());
        for a in actions {
            let next = self.predict(out.last().unwrap(), a)?;
            out.push(next);
        }
        Ok(out)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new("dynamics");
        ck.set("k", self.stack)?;
        ck.set("d", self.latent_dim)?;
        ck.set("m", self.action_dim)?;
        ck.set("hidden", self.hidden())?;
        ck.add_params("dynamics", self);
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind("dynamics")?;
        let hidden: Vec<usize> = ck.get("hidden")?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut params = Self::new(ck.get("k")?, ck.get("d")?, ck.get("m")?, &hidden, &mut rng)?;
        ck.load_params("dynamics", &mut params)?;
        Ok(params)
    }
}

impl LatentDynamics for DynamicsParams {
    fn state_dim(&self) -> usize {
        self.state_len()
    }

    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn step_batch(&self, z: &[f64], a: &[f64], batch: usize) -> Vec<f64> {
        let raw = self.raw_batch(z, a, batch);
        self.shift(z, raw, batch)
    }

    fn step_vjp_batch(&self, z: &[f64], a: &[f64], batch: usize, grad_next: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (s, d, m) = (self.state_len(), self.latent_dim, self.action_dim);
        let tape = self.net.forward_tape(&self.inputs(z, a, batch), batch);
        let raw = tape.output();
        let mut grad_raw = Vec::with_capacity(batch * d);
        for (r, g) in raw.chunks_exact(d).zip(grad_next.chunks_exact(s)) {
            let mut unit = r.to_vec();
            l2_normalize(&mut unit);
            grad_raw.extend(l2_normalize_backward(r, &unit, &g[s - d..]));
        }
        let gx = self.net.backward(&tape, &grad_raw, None);
        let mut gz = Vec::with_capacity(batch * s);
        let mut ga = Vec::with_capacity(batch * m);
        for (row, g) in gx.chunks_exact(s + m).zip(grad_next.chunks_exact(s)) {
            let start = gz.len();
            gz.extend_from_slice(&row[..s]);
            // the shifted blocks pass their gradient straight back one slot
            for (dst, src) in gz[start + d..start + s].iter_mut().zip(&g[..s - d]) {
                *dst += src;
            }
            ga.extend_from_slice(&row[s..]);
        }
        (gz, ga)
    }
}

impl Parameters for DynamicsParams {
    fn params(&self) -> Vec<ParamView<'_>> {
        self.net.params()
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.net.params_mut()
    }
}

/// One supervised example: stacked state, action, and the encoded next frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsSample {
    pub z: Vec<f64>,
    pub action: Vec<f64>,
    pub next: Vec<f64>,
}

/// `‖Ψ̄(Z, a) − z_next‖₂` on the raw, unnormalized output.
pub fn loss_dynamics(z: &StackedLatent, a: &[f64], z_next: &Latent, params: &DynamicsParams) -> Result<f64> {
    if z_next.dim() != params.latent_dim {
        return Err(Error::config("target latent has the wrong dimension"));
    }
    let raw = params.raw(z, a)?;
    Ok(residual_norm(&raw, z_next.as_slice()))
}

fn residual_norm(raw: &[f64], target: &[f64]) -> f64 {
    raw.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>().sqrt()
}

fn stack_samples(params: &DynamicsParams, samples: &[&DynamicsSample]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let (s, d, m) = (params.state_len(), params.latent_dim, params.action_dim);
    let n = samples.len();
    let (mut z, mut a, mut t) = (
        Vec::with_capacity(n * s),
        Vec::with_capacity(n * m),
        Vec::with_capacity(n * d),
    );
    for smp in samples {
        if smp.z.len() != s || smp.action.len() != m || smp.next.len() != d {
            return Err(Error::config("dynamics sample has inconsistent shapes"));
        }
        z.extend_from_slice(&smp.z);
        a.extend_from_slice(&smp.action);
        t.extend_from_slice(&smp.next);
    }
    Ok((z, a, t))
}

/// Mean loss over `samples` and its gradient with respect to all parameters.
pub fn dynamics_loss_and_grad(params: &DynamicsParams, samples: &[&DynamicsSample]) -> Result<(f64, DynamicsParams)> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset("no dynamics samples".into()));
    }
    let d = params.latent_dim;
    let n = samples.len();
    let (z, a, t) = stack_samples(params, samples)?;
    let tape = params.net.forward_tape(&params.inputs(&z, &a, n), n);
    let mut loss = 0.0;
    let mut g = Vec::with_capacity(n * d);
    for (p, tr) in tape.output().chunks_exact(d).zip(t.chunks_exact(d)) {
        let r: Vec<f64> = p.iter().zip(tr).map(|(p, t)| p - t).collect();
        let len = norm(&r);
        loss += len;
        let scale = if len > 0.0 { 1.0 / (len * n as f64) } else { 0.0 };
        g.extend(r.iter().map(|v| v * scale));
    }
    let mut grads = params.zeros_like();
    params.net.backward(&tape, &g, Some(&mut grads.net));
    Ok((loss / n as f64, grads))
}

pub fn mean_dynamics_loss(params: &DynamicsParams, samples: &[&DynamicsSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset("no dynamics samples".into()));
    }
    let d = params.latent_dim;
    let mut total = 0.0;
    for chunk in samples.chunks(256) {
        let (z, a, t) = stack_samples(params, chunk)?;
        let raw = params.raw_batch(&z, &a, chunk.len());
        total += raw
            .chunks_exact(d)
            .zip(t.chunks_exact(d))
            .map(|(p, t)| residual_norm(p, t))
            .sum::<f64>();
    }
    Ok(total / samples.len() as f64)
}
