//! DDPG with two critic formulations.
//!
//! The Q variant learns `Q(z, a)` from the Bellman residual and moves the
//! actor along `∂Q/∂a`. The V variant learns a state value `V(z)` and routes
//! the policy gradient through a frozen latent dynamics model, maximizing
//! `V(Ψ(z, π(z)))`; its bootstrap target `V′(Ψ(z, π′(z)))` keeps the update
//! off-policy. The naive on-policy value loss is deliberately not offered.
//!
//! Both Bellman residuals are absolute errors averaged over the batch, and the
//! bootstrap term is dropped on terminal transitions.

pub mod bandit;
mod replay;
mod train;

pub use replay::{ReplayBuffer, Transition};
pub use train::{Agent, TrainStep};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::dynamics::LatentDynamics;
use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp, MlpTape, ParamView, Parameters};

/// Final-layer init range for actor and critic.
const FINAL_INIT: f64 = 3e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriticKind {
    Q,
    V,
}

impl CriticKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CriticKind::Q => "q",
            CriticKind::V => "v",
        }
    }
}

/// Axis-aligned action bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ActionBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() || lo.iter().zip(&hi).any(|(l, h)| !(l < h)) {
            return Err(Error::config("action box needs lo < hi in every dimension"));
        }
        Ok(Self { lo, hi })
    }

    /// The same interval in each of `dim` dimensions.
    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn mid(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn half_width(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (h - l)).collect()
    }

    pub fn contains(&self, a: &[f64]) -> bool {
        a.len() == self.dim() && a.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| *l <= *v && *v <= *h)
    }

    pub fn project(&self, a: &mut [f64]) {
        for (v, (l, h)) in a.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *v = v.clamp(*l, *h);
        }
    }

    pub fn clip(&self, a: &[f64]) -> Vec<f64> {
        let mut out = a.to_vec();
        self.project(&mut out);
        out
    }

    pub fn check(&self, a: &[f64]) -> Result<()> {
        if self.contains(a) {
            Ok(())
        } else {
            Err(Error::ActionOutOfBox {
                action: a.to_vec(),
                lo: self.lo.clone(),
                hi: self.hi.clone(),
            })
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| rng.random_range(*l..=*h)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub critic: CriticKind,
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub critic_lr: f64,
    pub actor_lr: f64,
    /// Actor-critic updates after each training episode.
    pub train_steps_per_episode: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            critic: CriticKind::Q,
            hidden: vec![400, 300],
            gamma: 0.99,
            tau: 0.005,
            batch_size: 64,
            replay_capacity: 1_000_000,
            critic_lr: 1e-3,
            actor_lr: 1e-4,
            train_steps_per_episode: 1000,
        }
    }
}

/// Deterministic policy: `mid + half_width · tanh(net(z))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Actor {
    net: Mlp,
    bounds: ActionBox,
}

impl Actor {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, bounds: ActionBox, hidden: &[usize], rng: &mut R) -> Self {
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(bounds.dim());
        Self {
            net: Mlp::new(&sizes, Activation::Tanh, Some(FINAL_INIT), rng),
            bounds,
        }
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn bounds(&self) -> &ActionBox {
        &self.bounds
    }

    pub fn state_dim(&self) -> usize {
        self.net.input_dim()
    }

    fn squash(&self, t: &[f64]) -> Vec<f64> {
        let (mid, half) = (self.bounds.mid(), self.bounds.half_width());
        let m = mid.len();
        t.iter()
            .enumerate()
            .map(|(i, v)| {
                let j = i % m;
                (mid[j] + half[j] * v).clamp(self.bounds.lo[j], self.bounds.hi[j])
            })
            .collect()
    }

    pub fn act_batch(&self, z: &[f64], batch: usize) -> Vec<f64> {
        self.squash(&self.net.forward(z, batch))
    }

    pub fn act(&self, z: &[f64]) -> Vec<f64> {
        self.act_batch(z, 1)
    }

    fn forward_tape(&self, z: &[f64], batch: usize) -> (MlpTape, Vec<f64>) {
        let tape = self.net.forward_tape(z, batch);
        let a = self.squash(tape.output());
        (tape, a)
    }

    /// Pulls `∂L/∂a` back; accumulates parameter gradients and returns `∂L/∂z`.
    fn backward(&self, tape: &MlpTape, grad_a: &[f64], grads: Option<&mut Actor>) -> Vec<f64> {
        let half = self.bounds.half_width();
        let g: Vec<f64> = grad_a.iter().enumerate().map(|(i, g)| g * half[i % half.len()]).collect();
        self.net.backward(tape, &g, grads.map(|a| &mut a.net))
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            net: self.net.zeros_like(),
            bounds: self.bounds.clone(),
        }
    }
}

impl Parameters for Actor {
    fn params(&self) -> Vec<ParamView<'_>> {
        self.net.params()
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.net.params_mut()
    }
}

/// Online and target networks of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentParams {
    pub kind: CriticKind,
    pub actor: Actor,
    pub critic: Mlp,
    pub actor_target: Actor,
    pub critic_target: Mlp,
    pub gamma: f64,
    pub tau: f64,
}

fn concat_rows(z: &[f64], s: usize, a: &[f64], m: usize, batch: usize) -> Vec<f64> {
    let mut x = Vec::with_capacity(batch * (s + m));
    for (zr, ar) in z.chunks_exact(s).zip(a.chunks_exact(m)) {
        x.extend_from_slice(zr);
        x.extend_from_slice(ar);
    }
    x
}

impl AgentParams {
    /// Fresh networks; targets start as exact copies.
    pub fn new<R: Rng + ?Sized>(state_dim: usize, bounds: ActionBox, config: &AgentConfig, rng: &mut R) -> Result<Self> {
        if state_dim == 0 || config.hidden.is_empty() || config.hidden.contains(&0) {
            return Err(Error::config("agent sizes must be positive"));
        }
        if !(0.0..=1.0).contains(&config.gamma) || !(0.0..=1.0).contains(&config.tau) {
            return Err(Error::config("gamma and tau must lie in [0, 1]"));
        }
        let m = bounds.dim();
        let actor = Actor::new(state_dim, bounds, &config.hidden, rng);
        let critic_in = match config.critic {
            CriticKind::Q => state_dim + m,
            CriticKind::V => state_dim,
        };
        let mut sizes = vec![critic_in];
        sizes.extend_from_slice(&config.hidden);
        sizes.push(1);
        let critic = Mlp::new(&sizes, Activation::Identity, Some(FINAL_INIT), rng);
        Ok(Self {
            kind: config.critic,
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            gamma: config.gamma,
            tau: config.tau,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.actor.state_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.actor.bounds.dim()
    }

    pub fn act(&self, z: &[f64]) -> Vec<f64> {
        self.actor.act(z)
    }

    fn expect(&self, kind: CriticKind) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::config(format!(
                "operation needs a {}-critic but the agent has a {}-critic",
                kind.as_str(),
                self.kind.as_str()
            )))
        }
    }

    /// `Q(z, a)` for a batch under the online critic.
    pub fn q_batch(&self, z: &[f64], a: &[f64], batch: usize) -> Result<Vec<f64>> {
        self.expect(CriticKind::Q)?;
        let x = concat_rows(z, self.state_dim(), a, self.action_dim(), batch);
        Ok(self.critic.forward(&x, batch))
    }

    /// `V(z)` for a batch under the online critic.
    pub fn v_batch(&self, z: &[f64], batch: usize) -> Result<Vec<f64>> {
        self.expect(CriticKind::V)?;
        Ok(self.critic.forward(z, batch))
    }

    /// `Q(z, a)` and its gradients with respect to `z` and `a`.
    pub fn q_with_grad(&self, z: &[f64], a: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        self.expect(CriticKind::Q)?;
        let s = self.state_dim();
        let x = concat_rows(z, s, a, self.action_dim(), 1);
        let tape = self.critic.forward_tape(&x, 1);
        let q = tape.output()[0];
        let g = self.critic.backward(&tape, &[1.0], None);
        Ok((q, g[..s].to_vec(), g[s..].to_vec()))
    }

    /// `V(z)` and its gradient.
    pub fn v_with_grad(&self, z: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.expect(CriticKind::V)?;
        let tape = self.critic.forward_tape(z, 1);
        let v = tape.output()[0];
        Ok((v, self.critic.backward(&tape, &[1.0], None)))
    }

    pub fn to_checkpoint(&self, steps: u64) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new("agent");
        ck.set("variant", self.kind)?;
        ck.set("gamma", self.gamma)?;
        ck.set("tau", self.tau)?;
        ck.set("steps", steps)?;
        ck.set("state_dim", self.state_dim())?;
        ck.set("bounds", &self.actor.bounds)?;
        let s = self.actor.net.sizes();
        ck.set("hidden", &s[1..s.len() - 1])?;
        ck.add_params("actor", &self.actor);
        ck.add_params("critic", &self.critic);
        ck.add_params("actor_target", &self.actor_target);
        ck.add_params("critic_target", &self.critic_target);
        Ok(ck)
    }

    /// Rebuilds the networks; also returns the recorded update count.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Self, u64)> {
        ck.expect_kind("agent")?;
        let config = AgentConfig {
            critic: ck.get("variant")?,
            hidden: ck.get("hidden")?,
            gamma: ck.get("gamma")?,
            tau: ck.get("tau")?,
            ..AgentConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = Self::new(ck.get("state_dim")?, ck.get("bounds")?, &config, &mut rng)?;
        ck.load_params("actor", &mut p.actor)?;
        ck.load_params("critic", &mut p.critic)?;
        ck.load_params("actor_target", &mut p.actor_target)?;
        ck.load_params("critic_target", &mut p.critic_target)?;
        Ok((p, ck.get("steps")?))
    }
}

fn stack_states<'a>(states: impl Iterator<Item = &'a [f64]>, s: usize) -> Result<(Vec<f64>, usize)> {
    let mut out = Vec::new();
    let mut n = 0;
    for z in states {
        if z.len() != s {
            return Err(Error::config(format!("state has {} values, expected {s}", z.len())));
        }
        out.extend_from_slice(z);
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyDataset("empty batch".into()));
    }
    Ok((out, n))
}

struct Columns {
    z: Vec<f64>,
    a: Vec<f64>,
    r: Vec<f64>,
    z_next: Vec<f64>,
    done: Vec<bool>,
    n: usize,
}

fn columns(params: &AgentParams, batch: &[&Transition]) -> Result<Columns> {
    let (s, m) = (params.state_dim(), params.action_dim());
    let (z, n) = stack_states(batch.iter().map(|t| t.z.as_slice()), s)?;
    let (z_next, _) = stack_states(batch.iter().map(|t| t.z_next.as_slice()), s)?;
    let mut a = Vec::with_capacity(n * m);
    for t in batch {
        if t.a.len() != m {
            return Err(Error::config("transition action has the wrong dimension"));
        }
        a.extend_from_slice(&t.a);
    }
    Ok(Columns {
        z,
        a,
        r: batch.iter().map(|t| t.r).collect(),
        z_next,
        done: batch.iter().map(|t| t.done).collect(),
        n,
    })
}

/// Mean absolute residual against fixed targets, and the critic gradient.
fn absolute_residual(critic: &Mlp, x: &[f64], targets: &[f64]) -> (f64, Mlp) {
    let n = targets.len();
    let tape = critic.forward_tape(x, n);
    let mut loss = 0.0;
    let g: Vec<f64> = tape
        .output()
        .iter()
        .zip(targets)
        .map(|(v, y)| {
            let r = v - y;
            loss += r.abs();
            if r > 0.0 {
                1.0 / n as f64
            } else if r < 0.0 {
                -1.0 / n as f64
            } else {
                0.0
            }
        })
        .collect();
    let mut grads = critic.zeros_like();
    critic.backward(&tape, &g, Some(&mut grads));
    (loss / n as f64, grads)
}

fn bootstrap(params: &AgentParams, c: &Columns, next_values: &[f64]) -> Vec<f64> {
    (0..c.n)
        .map(|i| {
            let cont = if c.done[i] { 0.0 } else { 1.0 };
            c.r[i] + params.gamma * cont * next_values[i]
        })
        .collect()
}

/// `mean |Q(z,a) − (r + γ(1−done)Q′(z′, π′(z′)))|` and its critic gradient.
pub fn loss_critic_q(batch: &[&Transition], params: &AgentParams) -> Result<(f64, Mlp)> {
    params.expect(CriticKind::Q)?;
    let c = columns(params, batch)?;
    let (s, m) = (params.state_dim(), params.action_dim());
    let a_next = params.actor_target.act_batch(&c.z_next, c.n);
    let q_next = params.critic_target.forward(&concat_rows(&c.z_next, s, &a_next, m, c.n), c.n);
    let y = bootstrap(params, &c, &q_next);
    Ok(absolute_residual(&params.critic, &concat_rows(&c.z, s, &c.a, m, c.n), &y))
}

/// `mean −Q(z, π(z))` and its actor gradient.
pub fn loss_actor_q(states: &[&[f64]], params: &AgentParams) -> Result<(f64, Actor)> {
    params.expect(CriticKind::Q)?;
    let (s, m) = (params.state_dim(), params.action_dim());
    let (z, n) = stack_states(states.iter().copied(), s)?;
    let (atape, a) = params.actor.forward_tape(&z, n);
    let ctape = params.critic.forward_tape(&concat_rows(&z, s, &a, m, n), n);
    let loss = -ctape.output().iter().sum::<f64>() / n as f64;
    let gx = params.critic.backward(&ctape, &vec![-1.0 / n as f64; n], None);
    let ga: Vec<f64> = gx.chunks_exact(s + m).flat_map(|row| row[s..].iter().copied()).collect();
    let mut grads = params.actor.zeros_like();
    params.actor.backward(&atape, &ga, Some(&mut grads));
    Ok((loss, grads))
}

fn check_dynamics(params: &AgentParams, dynamics: &dyn LatentDynamics) -> Result<()> {
    if dynamics.state_dim() != params.state_dim() || dynamics.action_dim() != params.action_dim() {
        return Err(Error::config("dynamics model does not match the agent's shapes"));
    }
    Ok(())
}

/// `mean |V(z) − (r + γ(1−done)V′(Ψ(z, π′(z))))|` and its critic gradient.
pub fn loss_critic_v(batch: &[&Transition], params: &AgentParams, dynamics: &dyn LatentDynamics) -> Result<(f64, Mlp)> {
    params.expect(CriticKind::V)?;
    check_dynamics(params, dynamics)?;
    let c = columns(params, batch)?;
    let a_next = params.actor_target.act_batch(&c.z, c.n);
    let z_pred = dynamics.step_batch(&c.z, &a_next, c.n);
    let v_next = params.critic_target.forward(&z_pred, c.n);
    let y = bootstrap(params, &c, &v_next);
    Ok(absolute_residual(&params.critic, &c.z, &y))
}

/// `mean −V(Ψ(z, π(z)))` and its actor gradient, taken through the dynamics.
pub fn loss_actor_v(states: &[&[f64]], params: &AgentParams, dynamics: &dyn LatentDynamics) -> Result<(f64, Actor)> {
    params.expect(CriticKind::V)?;
    check_dynamics(params, dynamics)?;
    let s = params.state_dim();
    let (z, n) = stack_states(states.iter().copied(), s)?;
    let (atape, a) = params.actor.forward_tape(&z, n);
    let z_pred = dynamics.step_batch(&z, &a, n);
    let ctape = params.critic.forward_tape(&z_pred, n);
    let loss = -ctape.output().iter().sum::<f64>() / n as f64;
    let g_pred = params.critic.backward(&ctape, &vec![-1.0 / n as f64; n], None);
    let (_, ga) = dynamics.step_vjp_batch(&z, &a, n, &g_pred);
    let mut grads = params.actor.zeros_like();
    params.actor.backward(&atape, &ga, Some(&mut grads));
    Ok((loss, grads))
}
