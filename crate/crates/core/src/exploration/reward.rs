use rand::Rng;
use serde::{Deserialize, Serialize};

use super::StateReward;
use crate::error::{Error, Result};
use crate::nn::{Activation, Adam, AdamConfig, Mlp, Parameters};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub batch_size: usize,
    pub steps_per_episode: usize,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            lr: 1e-3,
            batch_size: 64,
            steps_per_episode: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardSample {
    pub z: Vec<f64>,
    pub r: f64,
}

/// Regression `r(z)` of the reward observed on arrival in `z`.
#[derive(Debug, Clone)]
pub struct RewardModel {
    net: Mlp,
    opt: Adam,
    batch_size: usize,
}

impl RewardModel {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, config: &RewardConfig, rng: &mut R) -> Result<Self> {
        if state_dim == 0 || config.batch_size == 0 || config.hidden.contains(&0) {
            return Err(Error::config("reward model sizes must be positive"));
        }
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(&config.hidden);
        sizes.push(1);
        Ok(Self {
            net: Mlp::new(&sizes, Activation::Identity, None, rng),
            opt: Adam::new(AdamConfig::with_lr(config.lr)),
            batch_size: config.batch_size,
        })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    /// Mean-squared-error steps on uniformly drawn batches; returns the mean batch loss.
    pub fn fit<R: Rng + ?Sized>(&mut self, samples: &[RewardSample], steps: usize, rng: &mut R) -> Result<f64> {
        if steps == 0 {
            return Ok(0.0);
        }
        if samples.is_empty() {
            return Err(Error::EmptyDataset("no reward samples".into()));
        }
        let s = self.net.input_dim();
        let n = self.batch_size;
        let mut sum = 0.0;
        for step in 0..steps {
            let mut x = Vec::with_capacity(n * s);
            let mut y = Vec::with_capacity(n);
            for _ in 0..n {
                let smp = &samples[rng.random_range(0..samples.len())];
                if smp.z.len() != s {
                    return Err(Error::config("reward sample has the wrong state dimension"));
                }
                x.extend_from_slice(&smp.z);
                y.push(smp.r);
            }
            let tape = self.net.forward_tape(&x, n);
            let mut loss = 0.0;
            let g: Vec<f64> = tape
                .output()
                .iter()
                .zip(&y)
                .map(|(p, t)| {
                    loss += (p - t) * (p - t);
                    2.0 * (p - t) / n as f64
                })
                .collect();
            loss /= n as f64;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    stage: "reward model",
                    step,
                    loss,
                });
            }
            let mut grads = self.net.zeros_like();
            self.net.backward(&tape, &g, Some(&mut grads));
            self.opt.step(&mut self.net, &grads)?;
            sum += loss;
        }
        Ok(sum / steps as f64)
    }
}

impl StateReward for RewardModel {
    fn reward(&self, z: &[f64]) -> f64 {
        self.net.forward(z, 1)[0]
    }

    fn reward_grad(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let tape = self.net.forward_tape(z, 1);
        let r = tape.output()[0];
        (r, self.net.backward(&tape, &[1.0], None))
    }
}

impl Parameters for RewardModel {
    fn params(&self) -> Vec<crate::nn::ParamView<'_>> {
        self.net.params()
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.net.params_mut()
    }
}
