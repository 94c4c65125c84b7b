use serde::{Deserialize, Serialize};

use super::params::Parameters;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// First/second-moment adaptive step sizes.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Descends along `grads`, which must have the layout of `params`.
    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let g = grads.flatten();
        if self.m.is_empty() {
            self.m = vec![0.0; g.len()];
            self.v = vec![0.0; g.len()];
        }
        if self.m.len() != g.len() {
            return Err(Error::config("optimizer state does not match parameter count"));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let mut offset = 0;
        for slot in params.params_mut() {
            for (i, p) in slot.iter_mut().enumerate() {
                let j = offset + i;
                self.m[j] = beta1 * self.m[j] + (1.0 - beta1) * g[j];
                self.v[j] = beta2 * self.v[j] + (1.0 - beta2) * g[j] * g[j];
                let mhat = self.m[j] / bc1;
                let vhat = self.v[j] / bc2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            }
            offset += slot.len();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Mlp};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn first_step_moves_each_parameter_by_lr() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Mlp::new(&[2, 3, 1], Activation::Identity, None, &mut rng);
        let before = net.flatten();
        let mut grads = net.zeros_like();
        grads.fill(0.25);
        let mut opt = Adam::new(AdamConfig::with_lr(0.01));
        opt.step(&mut net, &grads).unwrap();
        for (a, b) in net.flatten().iter().zip(&before) {
            assert!(((b - a) - 0.01).abs() < 1e-9);
        }
    }
}
