//! One-state quadratic bandit with optimum at `a = 0`, used to check that
//! both critic variants drive the policy to the analytic optimum.
//!
//! The Q variant sees single terminal transitions from `z0` with reward
//! `−a²`. The V variant needs a state-only reward, so the action first moves
//! `z0` to `Ψ(z0, a) = (sin a, cos a, 0)` with reward 0, and leaving that
//! state ends the episode with reward `−a²`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ActionBox, Agent, AgentConfig, AgentParams, CriticKind, ReplayBuffer, Transition};
use crate::dynamics::LatentDynamics;
use crate::error::Result;

pub const START: [f64; 3] = [0.0, 0.0, 1.0];
const END: [f64; 3] = [0.0, 0.0, -1.0];

/// Exact model of the two-stage bandit.
#[derive(Debug, Clone, Copy, Default)]
pub struct BanditDynamics;

impl LatentDynamics for BanditDynamics {
    fn state_dim(&self) -> usize {
        3
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn step_batch(&self, _z: &[f64], a: &[f64], _batch: usize) -> Vec<f64> {
        a.iter().flat_map(|a| [a.sin(), a.cos(), 0.0]).collect()
    }

    fn step_vjp_batch(&self, z: &[f64], a: &[f64], _batch: usize, grad_next: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let ga = a
            .iter()
            .zip(grad_next.chunks_exact(3))
            .map(|(a, g)| g[0] * a.cos() - g[1] * a.sin())
            .collect();
        (vec![0.0; z.len()], ga)
    }
}

#[derive(Debug, Clone)]
pub struct BanditConfig {
    pub agent: AgentConfig,
    pub steps: usize,
    /// Standard deviation of the Gaussian behaviour noise.
    pub noise: f64,
    /// Policy output at initialization, so convergence is not trivial.
    pub initial_action: f64,
}

impl BanditConfig {
    pub fn new(kind: CriticKind) -> Self {
        Self {
            agent: AgentConfig {
                critic: kind,
                hidden: vec![64, 64],
                gamma: 0.99,
                tau: 0.01,
                batch_size: 64,
                replay_capacity: 100_000,
                critic_lr: 1e-3,
                actor_lr: 1e-3,
                train_steps_per_episode: 1,
            },
            steps: 2000,
            noise: 0.5,
            initial_action: 0.5,
        }
    }
}

fn episode(kind: CriticKind, a: f64, follow_up: f64) -> Vec<Transition> {
    match kind {
        CriticKind::Q => vec![Transition {
            z: START.to_vec(),
            a: vec![a],
            r: -a * a,
            z_next: START.to_vec(),
            done: true,
        }],
        CriticKind::V => {
            let mid = BanditDynamics.step_batch(&START, &[a], 1);
            vec![
                Transition {
                    z: START.to_vec(),
                    a: vec![a],
                    r: 0.0,
                    z_next: mid.clone(),
                    done: false,
                },
                Transition {
                    z: mid,
                    a: vec![follow_up],
                    r: -a * a,
                    z_next: END.to_vec(),
                    done: true,
                },
            ]
        }
    }
}

/// Trains on the bandit and returns the final policy action at `z0`.
pub fn run_bandit(config: &BanditConfig, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds = ActionBox::uniform(1, -1.0, 1.0)?;
    let mut params = AgentParams::new(3, bounds.clone(), &config.agent, &mut rng)?;
    let last = params.actor.net_mut().layers_mut().last_mut().expect("actor has layers");
    last.bias[0] = config.initial_action.atanh();
    params.actor_target = params.actor.clone();
    let kind = params.kind;
    let mut agent = Agent::new(params, &config.agent)?;
    let mut buffer = ReplayBuffer::new(config.agent.replay_capacity);
    let noise = Normal::new(0.0, config.noise).expect("noise scale is finite and positive");
    while buffer.len() < config.agent.batch_size {
        let a = bounds.sample(&mut rng)[0];
        buffer.extend(episode(kind, a, rng.random_range(-1.0..=1.0)));
    }
    let dynamics = BanditDynamics;
    for _ in 0..config.steps {
        let greedy = agent.params.act(&START)[0];
        let a = (greedy + noise.sample(&mut rng)).clamp(-1.0, 1.0);
        let follow_up = (greedy + noise.sample(&mut rng)).clamp(-1.0, 1.0);
        buffer.extend(episode(kind, a, follow_up));
        agent.train_step(&buffer, Some(&dynamics), &mut rng)?;
    }
    Ok(agent.params.act(&START)[0])
}
