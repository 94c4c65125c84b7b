use serde::{Deserialize, Serialize};

use super::{ActionValue, StateReward};
use crate::dynamics::LatentDynamics;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    /// `Σ_{j=0..H} w_j Q(z_j, a_j)`
    QSum,
    /// `Σ_{j=1..H−1} w_j r(z_j) + w_H Q(z_H, a_H)`
    #[serde(rename = "r_plus_q")]
    RewardPlusQ,
    /// `Q(z_H, a_H)`
    TerminalQ,
}

/// `w_j = 1/H` for `j = 0..=H`.
pub fn uniform_weights(horizon: usize) -> Vec<f64> {
    vec![1.0 / horizon as f64; horizon + 1]
}

fn one_hot_final(horizon: usize) -> Vec<f64> {
    let mut w = vec![0.0; horizon + 1];
    w[horizon] = 1.0;
    w
}

/// Latent states `z_0..z_H` visited by `actions[0..H]`.
fn unroll(z0: &[f64], actions: &[Vec<f64>], dynamics: &dyn LatentDynamics) -> Vec<Vec<f64>> {
    let mut states = Vec::with_capacity(actions.len());
    states.push(z0.to_vec());
    for a in &actions[..actions.len() - 1] {
        let next = dynamics.step_batch(states.last().unwrap(), a, 1);
        states.push(next);
    }
    states
}

fn validate(
    actions: &[Vec<f64>],
    z0: &[f64],
    critic_dim: (usize, usize),
    weights: &[f64],
) -> Result<usize> {
    if actions.len() < 2 {
        return Err(Error::config("a plan needs H + 1 ≥ 2 actions"));
    }
    if weights.len() != actions.len() {
        return Err(Error::config(format!(
            "{} weights for {} actions",
            weights.len(),
            actions.len()
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::config("plan weights must be nonnegative"));
    }
    let (s, m) = critic_dim;
    if z0.len() != s || actions.iter().any(|a| a.len() != m) {
        return Err(Error::config("plan shapes do not match the dynamics model"));
    }
    Ok(actions.len() - 1)
}

/// Objective value and its gradient with respect to every action.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_objective(
    kind: ObjectiveKind,
    actions: &[Vec<f64>],
    z0: &[f64],
    critic: &dyn ActionValue,
    dynamics: &dyn LatentDynamics,
    reward: Option<&dyn StateReward>,
    weights: &[f64],
    want_grad: bool,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let dims = (dynamics.state_dim(), dynamics.action_dim());
    let horizon = validate(actions, z0, dims, weights)?;
    let one_hot;
    let weights = match kind {
        ObjectiveKind::TerminalQ => {
            one_hot = one_hot_final(horizon);
            &one_hot[..]
        }
        _ => weights,
    };
    if kind == ObjectiveKind::RewardPlusQ && reward.is_none() {
        return Err(Error::config("the reward-plus-Q objective needs a reward model"));
    }
    let states = unroll(z0, actions, dynamics);
    let mut total = 0.0;
    let mut grad_z: Vec<Vec<f64>> = vec![vec![0.0; dims.0]; horizon + 1];
    let mut grad_a: Vec<Vec<f64>> = vec![vec![0.0; dims.1]; horizon + 1];
    for j in 0..=horizon {
        let w = weights[j];
        let use_q = kind != ObjectiveKind::RewardPlusQ || j == horizon;
        if use_q {
            if want_grad {
                let (q, gz, ga) = critic.value_grad(&states[j], &actions[j]);
                total += w * q;
                grad_z[j].iter_mut().zip(&gz).for_each(|(d, g)| *d += w * g);
                grad_a[j].iter_mut().zip(&ga).for_each(|(d, g)| *d += w * g);
            } else {
                total += w * critic.value(&states[j], &actions[j]);
            }
        } else if j >= 1 {
            let reward = reward.expect("checked above");
            if want_grad {
                let (r, gz) = reward.reward_grad(&states[j]);
                total += w * r;
                grad_z[j].iter_mut().zip(&gz).for_each(|(d, g)| *d += w * g);
            } else {
                total += w * reward.reward(&states[j]);
            }
        }
    }
    if want_grad {
        for j in (1..=horizon).rev() {
            let (gz, ga) = dynamics.step_vjp_batch(&states[j - 1], &actions[j - 1], 1, &grad_z[j]);
            grad_z[j - 1].iter_mut().zip(&gz).for_each(|(d, g)| *d += g);
            grad_a[j - 1].iter_mut().zip(&ga).for_each(|(d, g)| *d += g);
        }
    } else {
        grad_a.clear();
    }
    Ok((total, grad_a))
}

pub fn objective_q_sum(
    actions: &[Vec<f64>],
    z0: &[f64],
    critic: &dyn ActionValue,
    dynamics: &dyn LatentDynamics,
    weights: &[f64],
) -> Result<f64> {
    evaluate_objective(ObjectiveKind::QSum, actions, z0, critic, dynamics, None, weights, false).map(|r| r.0)
}

pub fn objective_r_plus_q(
    actions: &[Vec<f64>],
    z0: &[f64],
    reward: Option<&dyn StateReward>,
    critic: &dyn ActionValue,
    dynamics: &dyn LatentDynamics,
    weights: &[f64],
) -> Result<f64> {
    evaluate_objective(ObjectiveKind::RewardPlusQ, actions, z0, critic, dynamics, reward, weights, false)
        .map(|r| r.0)
}

/// `objective_q_sum` with weight 1 on the final pair and 0 elsewhere.
pub fn objective_terminal_q(
    actions: &[Vec<f64>],
    z0: &[f64],
    critic: &dyn ActionValue,
    dynamics: &dyn LatentDynamics,
) -> Result<f64> {
    let weights = one_hot_final(actions.len().saturating_sub(1));
    evaluate_objective(ObjectiveKind::TerminalQ, actions, z0, critic, dynamics, None, &weights, false).map(|r| r.0)
}
