use rand::Rng;

use super::{loss_actor_q, loss_actor_v, loss_critic_q, loss_critic_v, AgentConfig, AgentParams, CriticKind, ReplayBuffer};
use crate::dynamics::LatentDynamics;
use crate::error::{Error, Result};
use crate::nn::{soft_update, Adam, AdamConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrainStep {
    Updated { critic_loss: f64, actor_loss: f64 },
    /// The buffer holds fewer transitions than one batch.
    Skipped,
}

/// Networks plus optimizer state.
#[derive(Debug, Clone)]
pub struct Agent {
    pub params: AgentParams,
    critic_opt: Adam,
    actor_opt: Adam,
    batch_size: usize,
    steps: u64,
}

impl Agent {
    pub fn new(params: AgentParams, config: &AgentConfig) -> Result<Self> {
        if config.batch_size == 0 {
            return Err(Error::config("agent batch_size must be positive"));
        }
        Ok(Self {
            params,
            critic_opt: Adam::new(AdamConfig::with_lr(config.critic_lr)),
            actor_opt: Adam::new(AdamConfig::with_lr(config.actor_lr)),
            batch_size: config.batch_size,
            steps: 0,
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps
    }

    /// One critic update, one actor update, then the soft target update.
    ///
    /// The V variant needs `dynamics`; the Q variant ignores it.
    pub fn train_step<R: Rng + ?Sized>(
        &mut self,
        buffer: &ReplayBuffer,
        dynamics: Option<&dyn LatentDynamics>,
        rng: &mut R,
    ) -> Result<TrainStep> {
        if buffer.len() < self.batch_size {
            return Ok(TrainStep::Skipped);
        }
        let batch = buffer.sample(self.batch_size, rng);
        let states: Vec<&[f64]> = batch.iter().map(|t| t.z.as_slice()).collect();
        let (critic_loss, actor_loss) = match self.params.kind {
            CriticKind::Q => {
                let (cl, cg) = loss_critic_q(&batch, &self.params)?;
                self.critic_opt.step(&mut self.params.critic, &cg)?;
                let (al, ag) = loss_actor_q(&states, &self.params)?;
                self.actor_opt.step(&mut self.params.actor, &ag)?;
                (cl, al)
            }
            CriticKind::V => {
                let dynamics =
                    dynamics.ok_or_else(|| Error::config("the value critic needs a dynamics model"))?;
                let (cl, cg) = loss_critic_v(&batch, &self.params, dynamics)?;
                self.critic_opt.step(&mut self.params.critic, &cg)?;
                let (al, ag) = loss_actor_v(&states, &self.params, dynamics)?;
                self.actor_opt.step(&mut self.params.actor, &ag)?;
                (cl, al)
            }
        };
        if !critic_loss.is_finite() || !actor_loss.is_finite() {
            return Err(Error::Diverged {
                stage: "agent",
                step: self.steps as usize,
                loss: if critic_loss.is_finite() { actor_loss } else { critic_loss },
            });
        }
        let tau = self.params.tau;
        soft_update(&self.params.critic, &mut self.params.critic_target, tau)?;
        soft_update(&self.params.actor, &mut self.params.actor_target, tau)?;
        self.steps += 1;
        Ok(TrainStep::Updated {
            critic_loss,
            actor_loss,
        })
    }
}
