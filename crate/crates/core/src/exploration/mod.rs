//! Exploratory action selection.
//!
//! The baseline adds Ornstein-Uhlenbeck noise to the actor. The alternative
//! optimizes a short action sequence through the learned dynamics against a
//! critic-based objective and executes its first action.

mod objective;
mod ou;
mod planner;
mod reward;
#[cfg(test)]
mod tests;

pub use objective::{
    evaluate_objective, objective_q_sum, objective_r_plus_q, objective_terminal_q, uniform_weights, ObjectiveKind,
};
pub use ou::{OuConfig, OuProcess};
pub use planner::{plan, PlanProblem, PlanResult, PlannerConfig};
pub use reward::{RewardConfig, RewardModel, RewardSample};

use rand::Rng;

use crate::agent::{ActionBox, Actor, AgentParams, CriticKind};
use crate::dynamics::LatentDynamics;
use crate::error::{Error, Result};

/// A differentiable score of a state-action pair.
pub trait ActionValue {
    fn value(&self, z: &[f64], a: &[f64]) -> f64;
    /// The value and its gradients with respect to `z` and `a`.
    fn value_grad(&self, z: &[f64], a: &[f64]) -> (f64, Vec<f64>, Vec<f64>);
}

/// A differentiable state-only reward.
pub trait StateReward {
    fn reward(&self, z: &[f64]) -> f64;
    fn reward_grad(&self, z: &[f64]) -> (f64, Vec<f64>);
}

pub trait Policy {
    fn act(&self, z: &[f64]) -> Vec<f64>;
}

impl<F: Fn(&[f64]) -> Vec<f64>> Policy for F {
    fn act(&self, z: &[f64]) -> Vec<f64> {
        self(z)
    }
}

impl Policy for Actor {
    fn act(&self, z: &[f64]) -> Vec<f64> {
        Actor::act(self, z)
    }
}

impl Policy for AgentParams {
    fn act(&self, z: &[f64]) -> Vec<f64> {
        AgentParams::act(self, z)
    }
}

/// `Q(z, a)` from a Q-variant agent.
#[derive(Debug, Clone, Copy)]
pub struct QCritic<'a>(pub &'a AgentParams);

impl ActionValue for QCritic<'_> {
    fn value(&self, z: &[f64], a: &[f64]) -> f64 {
        self.0.q_batch(z, a, 1).expect("QCritic wraps a Q-variant agent")[0]
    }

    fn value_grad(&self, z: &[f64], a: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        self.0.q_with_grad(z, a).expect("QCritic wraps a Q-variant agent")
    }
}

/// `V(Ψ(z, a))`: a value critic standing in for `Q`.
#[derive(Clone, Copy)]
pub struct VThroughDynamics<'a> {
    pub agent: &'a AgentParams,
    pub dynamics: &'a dyn LatentDynamics,
}

impl ActionValue for VThroughDynamics<'_> {
    fn value(&self, z: &[f64], a: &[f64]) -> f64 {
        let next = self.dynamics.step_batch(z, a, 1);
        self.agent.v_batch(&next, 1).expect("VThroughDynamics wraps a V-variant agent")[0]
    }

    fn value_grad(&self, z: &[f64], a: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let next = self.dynamics.step_batch(z, a, 1);
        let (v, g) = self.agent.v_with_grad(&next).expect("VThroughDynamics wraps a V-variant agent");
        let (gz, ga) = self.dynamics.step_vjp_batch(z, a, 1, &g);
        (v, gz, ga)
    }
}

/// Picks the critic matching the agent's variant.
pub fn critic_for<'a>(agent: &'a AgentParams, dynamics: &'a dyn LatentDynamics) -> Box<dyn ActionValue + 'a> {
    match agent.kind {
        CriticKind::Q => Box::new(QCritic(agent)),
        CriticKind::V => Box::new(VThroughDynamics { agent, dynamics }),
    }
}

/// Networks the planner reads.
#[derive(Clone, Copy)]
pub struct PlanContext<'a> {
    pub critic: &'a dyn ActionValue,
    pub dynamics: &'a dyn LatentDynamics,
    pub reward: Option<&'a dyn StateReward>,
    pub policy: &'a dyn Policy,
}

pub enum ExploreMode<'a> {
    /// The deterministic actor, unmodified.
    Evaluate,
    /// Actor output plus OU noise scaled by the box half-width.
    Ou(&'a mut OuProcess),
    TrajOpt {
        config: &'a PlannerConfig,
        context: PlanContext<'a>,
    },
}

/// The action to execute at `z`; trajectory optimization also returns its plan.
pub fn explore_action<R: Rng + ?Sized>(
    z: &[f64],
    policy: &dyn Policy,
    bounds: &ActionBox,
    mode: ExploreMode<'_>,
    rng: &mut R,
) -> Result<(Vec<f64>, Option<PlanResult>)> {
    match mode {
        ExploreMode::Evaluate => Ok((policy.act(z), None)),
        ExploreMode::Ou(process) => {
            if process.dim() != bounds.dim() {
                return Err(Error::config("OU process and action box differ in dimension"));
            }
            let mut a = policy.act(z);
            for ((v, n), w) in a.iter_mut().zip(process.step(rng)).zip(bounds.half_width()) {
                *v += n * w;
            }
            bounds.project(&mut a);
            Ok((a, None))
        }
        ExploreMode::TrajOpt { config, context } => {
            let problem = PlanProblem::from_config(z.to_vec(), config, bounds.clone())?;
            let result = plan(&problem, &context)?;
            Ok((result.actions[0].clone(), Some(result)))
        }
    }
}
