//! Pixel-observation toy environments.
//!
//! `peg2d` is a sparse-reward insertion task: a dot moves by bounded position
//! deltas in the unit square and must be pushed to the bottom of a narrow
//! vertical slot. `runner` is a dense-reward 1-D cart rewarded for forward
//! velocity, observed through a frame stack.

mod demos;
mod peg2d;
mod render;
mod runner;

pub use demos::{
    episode_transitions, generate_demonstrations, read_demonstrations, seed_replay, stack_latents, write_demonstrations,
    DemoEpisode, Demonstrations,
};
pub use peg2d::{Peg2d, Peg2dConfig};
pub use runner::{Runner, RunnerConfig};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::ActionBox;
use crate::embedding::{Image, ImageShape};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardKind {
    Sparse,
    Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub name: &'static str,
    pub bounds: ActionBox,
    pub episode_len: usize,
    /// Frames per stacked latent state.
    pub stack: usize,
    pub reward: RewardKind,
    pub image: ImageShape,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    /// Underlying simulator state.
    pub state: Vec<f64>,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Image,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

pub trait Environment {
    fn spec(&self) -> &EnvSpec;
    /// Starts a new episode; the reward of the returned result is 0.
    fn reset(&mut self, rng: &mut ChaCha8Rng) -> StepResult;
    /// Actions outside the box are rejected rather than clipped.
    fn step(&mut self, action: &[f64]) -> Result<StepResult>;
    /// A noisy expert action for demonstrations, if the task has one.
    fn scripted_action(&self, rng: &mut ChaCha8Rng) -> Option<Vec<f64>>;
}

/// The `[env]` table of an experiment: one variant per environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase", deny_unknown_fields)]
pub enum EnvConfig {
    Peg2d(Peg2dConfig),
    Runner(RunnerConfig),
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig::Peg2d(Peg2dConfig::default())
    }
}

impl EnvConfig {
    pub fn name(&self) -> &'static str {
        match self {
            EnvConfig::Peg2d(_) => "peg2d",
            EnvConfig::Runner(_) => "runner",
        }
    }

    pub fn build(&self) -> Result<Box<dyn Environment>> {
        Ok(match self {
            EnvConfig::Peg2d(c) => Box::new(Peg2d::new(c.clone())?),
            EnvConfig::Runner(c) => Box::new(Runner::new(c.clone())?),
        })
    }
}
