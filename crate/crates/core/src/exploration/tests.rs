use super::*;
use crate::agent::AgentConfig;
use crate::dynamics::DynamicsParams;
use crate::testutil::{central_difference, max_relative_error};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// z′ = z + a in one dimension.
struct Shift;

impl LatentDynamics for Shift {
    fn state_dim(&self) -> usize {
        1
    }
    fn action_dim(&self) -> usize {
        1
    }
    fn step_batch(&self, z: &[f64], a: &[f64], _: usize) -> Vec<f64> {
        z.iter().zip(a).map(|(z, a)| z + a).collect()
    }
    fn step_vjp_batch(&self, _: &[f64], _: &[f64], _: usize, g: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (g.to_vec(), g.to_vec())
    }
}

/// Q(z, a) = scale · (−(z − 0.6)²).
struct Bowl(f64);

impl ActionValue for Bowl {
    fn value(&self, z: &[f64], _: &[f64]) -> f64 {
        -self.0 * (z[0] - 0.6).powi(2)
    }
    fn value_grad(&self, z: &[f64], a: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        (self.value(z, a), vec![-2.0 * self.0 * (z[0] - 0.6)], vec![0.0])
    }
}

/// Q(z, a) = z + offset.
struct Affine(f64);

impl ActionValue for Affine {
    fn value(&self, z: &[f64], _: &[f64]) -> f64 {
        z[0] + self.0
    }
    fn value_grad(&self, z: &[f64], a: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        (self.value(z, a), vec![1.0], vec![0.0; a.len()])
    }
}

struct Constant(f64);

impl ActionValue for Constant {
    fn value(&self, _: &[f64], _: &[f64]) -> f64 {
        self.0
    }
    fn value_grad(&self, z: &[f64], a: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        (self.0, vec![0.0; z.len()], vec![0.0; a.len()])
    }
}

struct Scaled<'a>(f64, &'a dyn ActionValue);

impl ActionValue for Scaled<'_> {
    fn value(&self, z: &[f64], a: &[f64]) -> f64 {
        self.0 * self.1.value(z, a)
    }
    fn value_grad(&self, z: &[f64], a: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let (v, gz, ga) = self.1.value_grad(z, a);
        let s = self.0;
        (s * v, gz.iter().map(|g| s * g).collect(), ga.iter().map(|g| s * g).collect())
    }
}

/// r(z) = z.
struct Identity;

impl StateReward for Identity {
    fn reward(&self, z: &[f64]) -> f64 {
        z[0]
    }
    fn reward_grad(&self, z: &[f64]) -> (f64, Vec<f64>) {
        (z[0], vec![1.0])
    }
}

fn zero_policy(_: &[f64]) -> Vec<f64> {
    vec![0.0]
}

fn one_d_box() -> ActionBox {
    ActionBox::uniform(1, -1.0, 1.0).unwrap()
}

#[test]
fn ou_fixed_point_and_single_step() {
    let mut p = OuProcess::new(2, OuConfig::default());
    for _ in 0..10 {
        assert_eq!(p.step_with(&[0.0, 0.0]), &[0.0, 0.0]);
    }
    p.set_state(&[1.0, 1.0]);
    let x = p.step_with(&[0.0, 0.0]);
    assert!((x[0] - 0.85).abs() < 1e-15);
}

#[test]
fn ou_stationary_std_matches_the_ar1_closed_form() {
    let config = OuConfig::default();
    let mut p = OuProcess::new(1, config.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..1000 {
        p.step(&mut rng);
    }
    let n = 1_000_000;
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let x = p.step(&mut rng)[0];
        s += x;
        s2 += x * x;
    }
    let mean = s / n as f64;
    let std = (s2 / n as f64 - mean * mean).sqrt();
    let expected = config.stationary_std();
    assert!((std / expected - 1.0).abs() < 0.05, "{std} vs {expected}");
}

#[test]
fn objective_examples() {
    let acts = vec![vec![0.3], vec![-0.2], vec![0.9]];
    let h = 2;
    let q = objective_q_sum(&acts, &[0.1], &Constant(1.5), &Shift, &uniform_weights(h)).unwrap();
    assert!((q - 3.0 * 1.5 / 2.0).abs() < 1e-12);

    let acts = vec![vec![1.0], vec![0.0]];
    let q = objective_q_sum(&acts, &[0.0], &Affine(2.0), &Shift, &[1.0, 1.0]).unwrap();
    assert_eq!(q, 5.0);

    // r(z1) = 0.5 and Q(z2, a2) = 1
    let acts = vec![vec![0.5], vec![0.0], vec![0.0]];
    let v = objective_r_plus_q(&acts, &[0.0], Some(&Identity), &Affine(0.5), &Shift, &[9.0, 1.0, 1.0]).unwrap();
    assert_eq!(v, 1.5);
    assert!(objective_r_plus_q(&acts, &[0.0], None, &Affine(0.5), &Shift, &[1.0; 3]).is_err());

    struct Zero;
    impl StateReward for Zero {
        fn reward(&self, _: &[f64]) -> f64 {
            0.0
        }
        fn reward_grad(&self, z: &[f64]) -> (f64, Vec<f64>) {
            (0.0, vec![0.0; z.len()])
        }
    }
    let v = objective_r_plus_q(&acts, &[0.0], Some(&Zero), &Affine(0.5), &Shift, &[1.0, 1.0, 0.25]).unwrap();
    assert_eq!(v, 0.25 * 1.0);

    let t = objective_terminal_q(&[vec![0.2], vec![0.1]], &[0.0], &Affine(1.0), &Shift).unwrap();
    assert!((t - 1.2).abs() < 1e-15);
    assert!(objective_q_sum(&[vec![0.0]], &[0.0], &Affine(0.0), &Shift, &[1.0]).is_err());
    assert!(objective_q_sum(&acts, &[0.0], &Affine(0.0), &Shift, &[1.0, -1.0, 1.0]).is_err());
}

struct Nets {
    dynamics: DynamicsParams,
    q_agent: AgentParams,
    v_agent: AgentParams,
    reward: RewardModel,
}

fn nets(seed: u64) -> Nets {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (k, d, m) = (2, 3, 2);
    let dynamics = DynamicsParams::new(k, d, m, &[8, 8], &mut rng).unwrap();
    let bounds = ActionBox::uniform(m, -1.0, 1.0).unwrap();
    let mut agent = |kind| {
        let cfg = AgentConfig {
            critic: kind,
            hidden: vec![8, 6],
            ..AgentConfig::default()
        };
        let mut p = AgentParams::new(k * d, bounds.clone(), &cfg, &mut rng).unwrap();
        for net in [&mut p.critic, p.actor.net_mut()] {
            let last = net.layers_mut().last_mut().unwrap();
            last.weight.iter_mut().for_each(|w| *w *= 200.0);
        }
        p
    };
    let q_agent = agent(CriticKind::Q);
    let v_agent = agent(CriticKind::V);
    let reward = RewardModel::new(k * d, &RewardConfig { hidden: vec![5], ..RewardConfig::default() }, &mut rng).unwrap();
    Nets {
        dynamics,
        q_agent,
        v_agent,
        reward,
    }
}

fn random_plan(seed: u64, h: usize, m: usize, s: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let acts = (0..=h).map(|_| (0..m).map(|_| rng.random_range(-0.9..0.9)).collect()).collect();
    let mut z: Vec<f64> = (0..s).map(|_| rng.random_range(-1.0..1.0)).collect();
    for block in z.chunks_mut(3) {
        crate::nn::linalg::l2_normalize(block);
    }
    (acts, z)
}

fn objective_gradient_error(kind: ObjectiveKind, critic: &dyn ActionValue, n: &Nets, seed: u64) -> f64 {
    let h = 4;
    let (acts, z0) = random_plan(seed, h, 2, 6);
    let weights: Vec<f64> = (0..=h).map(|j| 0.2 + 0.1 * j as f64).collect();
    let reward: Option<&dyn StateReward> = Some(&n.reward);
    let (_, grad) = evaluate_objective(kind, &acts, &z0, critic, &n.dynamics, reward, &weights, true).unwrap();
    let numeric = central_difference(
        |flat| {
            let acts: Vec<Vec<f64>> = flat.chunks(2).map(<[f64]>::to_vec).collect();
            evaluate_objective(kind, &acts, &z0, critic, &n.dynamics, reward, &weights, false)
                .unwrap()
                .0
        },
        &acts.concat(),
        1e-5,
    );
    max_relative_error(&grad.concat(), &numeric, 1e-6)
}

#[test]
fn objective_gradients_match_finite_differences() {
    let n = nets(1);
    let q = QCritic(&n.q_agent);
    let v = VThroughDynamics {
        agent: &n.v_agent,
        dynamics: &n.dynamics,
    };
    for kind in [ObjectiveKind::QSum, ObjectiveKind::RewardPlusQ, ObjectiveKind::TerminalQ] {
        for (name, critic) in [("q", &q as &dyn ActionValue), ("v", &v)] {
            let err = objective_gradient_error(kind, critic, &n, 2);
            assert!(err <= 1e-3, "{kind:?}/{name}: {err}");
        }
    }
}

#[test]
fn terminal_q_is_one_hot_q_sum_bitwise() {
    let n = nets(3);
    let q = QCritic(&n.q_agent);
    for seed in 0..20 {
        let (acts, z0) = random_plan(seed, 3, 2, 6);
        let t = objective_terminal_q(&acts, &z0, &q, &n.dynamics).unwrap();
        let s = objective_q_sum(&acts, &z0, &q, &n.dynamics, &[0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(t.to_bits(), s.to_bits());
    }
}

fn quadratic_problem() -> PlanProblem {
    PlanProblem::new(vec![0.0], 2, ObjectiveKind::TerminalQ, one_d_box()).unwrap()
}

#[test]
fn planner_reaches_the_quadratic_optimum() {
    let problem = quadratic_problem();
    let ctx = PlanContext {
        critic: &Bowl(1.0),
        dynamics: &Shift,
        reward: None,
        policy: &zero_policy,
    };
    let res = plan(&problem, &ctx).unwrap();
    let z2 = res.actions[0][0] + res.actions[1][0];
    assert!((z2 - 0.6).abs() <= 1e-4, "{z2}");
    assert!(res.final_objective >= res.initial_objective - 1e-9);
    let mut grid_best = f64::NEG_INFINITY;
    for i in 0..=200 {
        for j in 0..=200 {
            let (a0, a1) = (-1.0 + 0.01 * i as f64, -1.0 + 0.01 * j as f64);
            grid_best = grid_best.max(-(a0 + a1 - 0.6).powi(2));
        }
    }
    assert!(res.final_objective >= grid_best - 1e-4);
}

#[test]
fn planner_is_scale_invariant() {
    let problem = quadratic_problem();
    let plan_with = |c: f64| {
        let bowl = Bowl(c);
        let ctx = PlanContext {
            critic: &bowl,
            dynamics: &Shift,
            reward: None,
            policy: &zero_policy,
        };
        plan(&problem, &ctx).unwrap().actions.concat()
    };
    let (a, b) = (plan_with(1.0), plan_with(7.3));
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-6, "{a:?} vs {b:?}");
    }
    let base = Affine(0.3);
    let scaled = Scaled(7.3, &base);
    let acts = vec![vec![0.2], vec![-0.4], vec![0.1]];
    let w = uniform_weights(2);
    let q1 = objective_q_sum(&acts, &[0.5], &base, &Shift, &w).unwrap();
    let q2 = objective_q_sum(&acts, &[0.5], &scaled, &Shift, &w).unwrap();
    assert!((q2 / q1 - 7.3).abs() <= 1e-12 * 7.3);
}

#[test]
fn constant_objective_returns_the_actor_plan() {
    let problem = PlanProblem::new(vec![0.2], 3, ObjectiveKind::QSum, one_d_box()).unwrap();
    let policy = |z: &[f64]| vec![0.5 * z[0] - 0.1];
    let ctx = PlanContext {
        critic: &Constant(2.0),
        dynamics: &Shift,
        reward: None,
        policy: &policy,
    };
    let res = plan(&problem, &ctx).unwrap();
    let mut z = 0.2;
    for a in &res.actions {
        assert_eq!(a[0], 0.5 * z - 0.1);
        z += a[0];
    }
    assert_eq!(res.iterations, 0);
}

#[test]
fn non_finite_objective_falls_back_to_the_actor() {
    let problem = PlanProblem::new(vec![0.2], 2, ObjectiveKind::QSum, one_d_box()).unwrap();
    let ctx = PlanContext {
        critic: &Constant(f64::NAN),
        dynamics: &Shift,
        reward: None,
        policy: &zero_policy,
    };
    let res = plan(&problem, &ctx).unwrap();
    assert!(res.fallback);
    assert_eq!(res.actions, vec![vec![0.0]; 3]);
}

#[test]
fn explore_modes() {
    let n = nets(4);
    let agent = &n.q_agent;
    let bounds = agent.actor.bounds().clone();
    let z: Vec<f64> = random_plan(5, 1, 2, 6).1;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let greedy = agent.act(&z);
    let (a, _) = explore_action(&z, agent, &bounds, ExploreMode::Evaluate, &mut rng).unwrap();
    assert_eq!(a, greedy);
    let mut ou = OuProcess::new(2, OuConfig { sigma: 0.0, ..OuConfig::default() });
    let (a, _) = explore_action(&z, agent, &bounds, ExploreMode::Ou(&mut ou), &mut rng).unwrap();
    assert_eq!(a, greedy);
    let mut ou = OuProcess::new(2, OuConfig::default());
    let (a, _) = explore_action(&z, agent, &bounds, ExploreMode::Ou(&mut ou), &mut rng).unwrap();
    assert!(bounds.contains(&a));
    let config = PlannerConfig::default();
    let ctx = PlanContext {
        critic: &Constant(1.0),
        dynamics: &n.dynamics,
        reward: None,
        policy: agent,
    };
    let (a, plan) = explore_action(&z, agent, &bounds, ExploreMode::TrajOpt { config: &config, context: ctx }, &mut rng)
        .unwrap();
    assert_eq!(a, greedy);
    assert_eq!(plan.unwrap().actions.len(), config.horizon + 1);
}

#[test]
fn reward_model_fits_a_linear_reward() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let samples: Vec<RewardSample> = (0..500)
        .map(|_| {
            let z: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            RewardSample { r: 0.5 * z[0] - z[2], z }
        })
        .collect();
    let mut model = RewardModel::new(3, &RewardConfig::default(), &mut rng).unwrap();
    let first = model.fit(&samples, 20, &mut rng).unwrap();
    model.fit(&samples, 1500, &mut rng).unwrap();
    let last = model.fit(&samples, 20, &mut rng).unwrap();
    assert!(last < 0.1 * first, "{last} vs {first}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn plans_are_feasible_and_never_worse(seed in 0u64..1000, h in 1usize..4, obj in 0usize..3) {
        let n = nets(seed);
        let kind = [ObjectiveKind::QSum, ObjectiveKind::RewardPlusQ, ObjectiveKind::TerminalQ][obj];
        let z0 = random_plan(seed, 0, 2, 6).1;
        let bounds = n.q_agent.actor.bounds().clone();
        let problem = PlanProblem::new(z0, h, kind, bounds.clone()).unwrap();
        let critic = QCritic(&n.q_agent);
        let ctx = PlanContext {
            critic: &critic,
            dynamics: &n.dynamics,
            reward: Some(&n.reward),
            policy: &n.q_agent,
        };
        let res = plan(&problem, &ctx).unwrap();
        prop_assert_eq!(res.actions.len(), h + 1);
        for a in &res.actions {
            prop_assert!(bounds.contains(a));
        }
        prop_assert!(res.final_objective >= res.initial_objective - 1e-9);
        prop_assert!(res.iterations <= 20);
    }
}
