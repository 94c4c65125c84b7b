use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::render::{Canvas, Color};
use super::{EnvSpec, Environment, RewardKind, StepInfo, StepResult};
use crate::agent::ActionBox;
use crate::embedding::{Image, ImageShape};
use crate::error::{Error, Result};

const BACKGROUND: Color = [0.05, 0.05, 0.1];
const MARKER: Color = [0.5, 0.5, 0.5];
const BODY: Color = [1.0, 1.0, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunnerConfig {
    pub image_size: usize,
    pub channels: usize,
    pub dt: f64,
    pub drag: f64,
    pub force: f64,
    pub action_repeat: usize,
    pub episode_len: usize,
    pub reward_scale: f64,
    pub stack: usize,
    /// Track length after which the rendered position wraps.
    pub track_length: f64,
    pub body_radius: f64,
}

impl Default for RunnerConfig {
    fn default() -> Self {
        Self {
            image_size: 64,
            channels: 3,
            dt: 0.05,
            drag: 1.0,
            force: 2.0,
            action_repeat: 2,
            episode_len: 420,
            reward_scale: 1.0,
            stack: 3,
            track_length: 2.0,
            body_radius: 3.0,
        }
    }
}

/// Cart on a line: `v ← v + dt(force·a − drag·v)`, `p ← p + dt·v`, applied
/// `action_repeat` times per step. The reward is `reward_scale · v` after the
/// step. Frames show the cart on a wrapping track.
#[derive(Debug, Clone)]
pub struct Runner {
    config: RunnerConfig,
    spec: EnvSpec,
    pos: f64,
    vel: f64,
    t: usize,
}

impl Runner {
    pub fn new(config: RunnerConfig) -> Result<Self> {
        let c = &config;
        if c.image_size == 0 || !(c.channels == 1 || c.channels == 3) {
            return Err(Error::config("runner renders 1- or 3-channel images of positive size"));
        }
        if c.episode_len == 0 || c.action_repeat == 0 || c.stack == 0 || !(c.dt > 0.0) || !(c.track_length > 0.0) {
            return Err(Error::config("runner timing and track sizes must be positive"));
        }
        let spec = EnvSpec {
            name: "runner",
            bounds: ActionBox::uniform(1, -1.0, 1.0)?,
            episode_len: c.episode_len,
            stack: c.stack,
            reward: RewardKind::Dense,
            image: ImageShape {
                height: c.image_size,
                width: c.image_size,
                channels: c.channels,
            },
        };
        Ok(Self {
            config,
            spec,
            pos: 0.0,
            vel: 0.0,
            t: 0,
        })
    }

    pub fn state(&self) -> (f64, f64) {
        (self.pos, self.vel)
    }

    /// Fraction of the track at which the cart is drawn.
    pub fn wrapped(&self) -> f64 {
        self.pos.rem_euclid(self.config.track_length) / self.config.track_length
    }

    pub fn render(&self) -> Image {
        let c = &self.config;
        let mut canvas = Canvas::new(self.spec.image, BACKGROUND);
        let u = self.wrapped();
        // ground ticks fixed in the world frame
        canvas.fill_where(MARKER, |pu, pv| pv < 0.2 && ((pu * 8.0).fract() < 0.5));
        canvas.disc(u, 0.5, c.body_radius, BODY);
        canvas.finish()
    }

    fn result(&self, reward: f64, done: bool) -> StepResult {
        StepResult {
            observation: self.render(),
            reward,
            done,
            info: StepInfo {
                state: vec![self.pos, self.vel],
                success: false,
            },
        }
    }
}

impl Environment for Runner {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _rng: &mut ChaCha8Rng) -> StepResult {
        self.pos = 0.0;
        self.vel = 0.0;
        self.t = 0;
        self.result(0.0, false)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        self.spec.bounds.check(action)?;
        let c = &self.config;
        for _ in 0..c.action_repeat {
            self.vel += c.dt * (c.force * action[0] - c.drag * self.vel);
            self.pos += c.dt * self.vel;
        }
        self.t += 1;
        Ok(self.result(c.reward_scale * self.vel, self.t >= self.spec.episode_len))
    }

    fn scripted_action(&self, _rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
        None
    }
}
