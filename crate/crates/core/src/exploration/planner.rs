//! Projected limited-memory quasi-Newton ascent over a box.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{evaluate_objective, uniform_weights, ObjectiveKind, PlanContext};
use crate::agent::ActionBox;
use crate::error::{Error, Result};
use crate::nn::linalg::{dot, norm};

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    pub horizon: usize,
    pub objective: ObjectiveKind,
    /// `H + 1` nonnegative weights; uniform `1/H` when absent.
    pub weights: Option<Vec<f64>>,
    pub max_iters: usize,
    pub memory: usize,
    pub grad_tol: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            horizon: 3,
            objective: ObjectiveKind::QSum,
            weights: None,
            max_iters: 20,
            memory: 10,
            grad_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanProblem {
    pub z0: Vec<f64>,
    pub horizon: usize,
    pub objective: ObjectiveKind,
    pub weights: Vec<f64>,
    pub bounds: ActionBox,
    pub max_iters: usize,
    pub memory: usize,
    pub grad_tol: f64,
}

impl PlanProblem {
    /// Default settings with uniform weights.
    pub fn new(z0: Vec<f64>, horizon: usize, objective: ObjectiveKind, bounds: ActionBox) -> Result<Self> {
        let config = PlannerConfig {
            horizon,
            objective,
            ..PlannerConfig::default()
        };
        Self::from_config(z0, &config, bounds)
    }

    pub fn from_config(z0: Vec<f64>, config: &PlannerConfig, bounds: ActionBox) -> Result<Self> {
        if config.horizon == 0 {
            return Err(Error::config("planning horizon must be at least 1"));
        }
        let weights = config.weights.clone().unwrap_or_else(|| uniform_weights(config.horizon));
        if weights.len() != config.horizon + 1 || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::config(format!(
                "planner needs {} nonnegative weights",
                config.horizon + 1
            )));
        }
        Ok(Self {
            z0,
            horizon: config.horizon,
            objective: config.objective,
            weights,
            bounds,
            max_iters: config.max_iters,
            memory: config.memory.max(1),
            grad_tol: config.grad_tol,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    /// `a_t..a_{t+H}`.
    pub actions: Vec<Vec<f64>>,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub iterations: usize,
    /// Objective after initialization and after every accepted step.
    pub trace: Vec<f64>,
    /// The objective was not finite at the actor's plan, which is returned as is.
    pub fallback: bool,
}

/// Internally the planner minimizes `−f` over flat action vectors.
struct Negated<'a, 'b> {
    problem: &'a PlanProblem,
    context: &'a PlanContext<'b>,
    m: usize,
}

impl Negated<'_, '_> {
    fn actions(&self, x: &[f64]) -> Vec<Vec<f64>> {
        x.chunks(self.m).map(<[f64]>::to_vec).collect()
    }

    fn eval(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (f, g) = evaluate_objective(
            self.problem.objective,
            &self.actions(x),
            &self.problem.z0,
            self.context.critic,
            self.context.dynamics,
            self.context.reward,
            &self.problem.weights,
            true,
        )?;
        Ok((-f, g.into_iter().flatten().map(|v| -v).collect()))
    }
}

fn project(bounds: &ActionBox, x: &mut [f64]) {
    let m = bounds.dim();
    for (i, v) in x.iter_mut().enumerate() {
        *v = v.clamp(bounds.lo[i % m], bounds.hi[i % m]);
    }
}

/// Gradient with components that point out of an active bound removed.
fn projected_gradient(bounds: &ActionBox, x: &[f64], g: &[f64]) -> Vec<f64> {
    let m = bounds.dim();
    x.iter()
        .zip(g)
        .enumerate()
        .map(|(i, (v, g))| {
            let (lo, hi) = (bounds.lo[i % m], bounds.hi[i % m]);
            // descent moves along −g
            if (*v <= lo && *g > 0.0) || (*v >= hi && *g < 0.0) {
                0.0
            } else {
                *g
            }
        })
        .collect()
}

/// Two-loop recursion: `−H g` from the stored curvature pairs.
fn lbfgs_direction(g: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y) in pairs.iter().rev() {
        let rho = 1.0 / dot(y, s);
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(q, y)| *q -= a * y);
        alphas.push((a, rho));
    }
    let (s, y) = pairs.back().expect("called with at least one pair");
    let gamma = dot(s, y) / dot(y, y);
    q.iter_mut().for_each(|v| *v *= gamma);
    for ((s, y), (a, rho)) in pairs.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(q, s)| *q += (a - b) * s);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Initial plan: the actor rolled through the dynamics.
fn actor_plan(problem: &PlanProblem, context: &PlanContext<'_>) -> Result<Vec<f64>> {
    let mut z = problem.z0.clone();
    let mut x = Vec::with_capacity((problem.horizon + 1) * problem.bounds.dim());
    for j in 0..=problem.horizon {
        let a = context.policy.act(&z);
        if a.len() != problem.bounds.dim() {
            return Err(Error::config("policy output does not match the action box"));
        }
        if j < problem.horizon {
            z = context.dynamics.step_batch(&z, &a, 1);
        }
        x.extend(a);
    }
    project(&problem.bounds, &mut x);
    Ok(x)
}

/// Maximizes the problem's objective starting from the actor's plan and
/// returns the best iterate seen.
pub fn plan(problem: &PlanProblem, context: &PlanContext<'_>) -> Result<PlanResult> {
    let m = problem.bounds.dim();
    if context.dynamics.action_dim() != m || context.dynamics.state_dim() != problem.z0.len() {
        return Err(Error::config("planner shapes do not match the dynamics model"));
    }
    let f = Negated { problem, context, m };
    let mut x = actor_plan(problem, context)?;
    let (mut fx, mut gx) = f.eval(&x)?;
    if !fx.is_finite() || gx.iter().any(|v| !v.is_finite()) {
        log::warn!("planner objective is not finite at the actor plan; using the actor's actions");
        return Ok(PlanResult {
            actions: f.actions(&x),
            initial_objective: -fx,
            final_objective: -fx,
            iterations: 0,
            trace: vec![-fx],
            fallback: true,
        });
    }
    let initial = -fx;
    let mut trace = vec![initial];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::with_capacity(problem.memory);
    let mut iterations = 0;
    while iterations < problem.max_iters {
        let pg = projected_gradient(&problem.bounds, &x, &gx);
        let pg_norm = norm(&pg);
        if pg_norm < problem.grad_tol {
            break;
        }
        let mut d = if pairs.is_empty() {
            Vec::new()
        } else {
            lbfgs_direction(&pg, &pairs)
        };
        if d.is_empty() || dot(&d, &pg) >= 0.0 {
            // unit-length steepest descent keeps the path independent of the objective's scale
            pairs.clear();
            d = pg.iter().map(|g| -g / pg_norm).collect();
        }
        // freeze coordinates held at a bound
        for (i, di) in d.iter_mut().enumerate() {
            if pg[i] == 0.0 && gx[i] != 0.0 {
                *di = 0.0;
            }
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let mut trial: Vec<f64> = x.iter().zip(&d).map(|(x, d)| x + step * d).collect();
            project(&problem.bounds, &mut trial);
            let moved: Vec<f64> = trial.iter().zip(&x).map(|(t, x)| t - x).collect();
            let decrease = dot(&gx, &moved);
            if decrease < 0.0 {
                let (ft, gt) = f.eval(&trial)?;
                if ft.is_finite() && ft <= fx + ARMIJO_C1 * decrease {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            break;
        };
        iterations += 1;
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&gx).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-12 * norm(&s) * norm(&y) && dot(&s, &y) > 0.0 {
            if pairs.len() == problem.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y));
        }
        x = x_new;
        fx = f_new;
        gx = g_new;
        trace.push(-fx);
    }
    // line-search acceptance makes the last iterate the best one
    Ok(PlanResult {
        actions: f.actions(&x),
        initial_objective: initial,
        final_objective: -fx,
        iterations,
        trace,
        fallback: false,
    })
}
