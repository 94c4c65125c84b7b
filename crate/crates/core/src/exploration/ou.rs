use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OuConfig {
    pub theta: f64,
    pub sigma: f64,
    pub dt: f64,
    pub mu: f64,
}

impl Default for OuConfig {
    fn default() -> Self {
        Self {
            theta: 0.15,
            sigma: 0.5,
            dt: 1.0,
            mu: 0.0,
        }
    }
}

impl OuConfig {
    /// Standard deviation of the stationary discrete process.
    pub fn stationary_std(&self) -> f64 {
        self.sigma / (2.0 * self.theta - self.theta * self.theta * self.dt).sqrt()
    }
}

/// `x ← x + θ(μ − x)dt + σ√dt ξ` per component.
#[derive(Debug, Clone, PartialEq)]
pub struct OuProcess {
    config: OuConfig,
    x: Vec<f64>,
}

impl OuProcess {
    /// Starts at the long-run mean.
    pub fn new(dim: usize, config: OuConfig) -> Self {
        Self {
            x: vec![config.mu; dim],
            config,
        }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn state(&self) -> &[f64] {
        &self.x
    }

    pub fn set_state(&mut self, x: &[f64]) {
        self.x.copy_from_slice(x);
    }

    pub fn reset(&mut self) {
        self.x.fill(self.config.mu);
    }

    /// Advances with the given standard-normal draws.
    pub fn step_with(&mut self, xi: &[f64]) -> &[f64] {
        let OuConfig { theta, sigma, dt, mu } = self.config;
        let noise = sigma * dt.sqrt();
        for (x, e) in self.x.iter_mut().zip(xi) {
            *x += theta * (mu - *x) * dt + noise * e;
        }
        &self.x
    }

    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<f64> {
        let xi: Vec<f64> = (0..self.x.len()).map(|_| rng.sample(StandardNormal)).collect();
        self.step_with(&xi).to_vec()
    }
}
