use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExplorerKind};
use super::metrics::{EpisodeRecord, JsonlWriter, Stream, TraceRecord, METRICS_FILE, TRACE_FILE};
use crate::agent::{Agent, AgentParams, ReplayBuffer, Transition};
use crate::checkpoint::Checkpoint;
use crate::dynamics::{train_dynamics, DynamicsParams, DynamicsSample, DynamicsTrainer};
use crate::embedding::{train_embedding, EmbeddingParams};
use crate::envs::{
    episode_transitions, generate_demonstrations, read_demonstrations, write_demonstrations, Demonstrations,
    Environment,
};
use crate::error::{Error, Result};
use crate::exploration::{
    critic_for, explore_action, ExploreMode, OuProcess, PlanContext, RewardModel, RewardSample, StateReward,
};

pub const CONFIG_FILE: &str = "config.toml";
pub const STATUS_FILE: &str = "status.json";
pub const PRETRAIN_DIR: &str = "pretrain";
pub const CHECKPOINT_DIR: &str = "checkpoints";
const DEMOS_DIR: &str = "demos";
const EMBEDDING_FILE: &str = "embedding.ckpt";
const DYNAMICS_FILE: &str = "dynamics.ckpt";
const AGENT_FILE: &str = "agent.ckpt";
const PRETRAIN_SUMMARY: &str = "pretrain.json";

// rng streams derived from one seed
const STREAM_DEMOS: u64 = 1;
const STREAM_DYNAMICS: u64 = 2;
const STREAM_ENV: u64 = 3;
const STREAM_INIT: u64 = 4;
const STREAM_LEARN: u64 = 5;
const STREAM_EXPLORE: u64 = 6;
const STREAM_EVAL: u64 = 7;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunState {
    Running,
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStatus {
    pub label: String,
    pub seed: u64,
    pub env: String,
    pub state: RunState,
    pub episodes_planned: usize,
    pub episodes_completed: usize,
    pub error: Option<String>,
}

impl RunStatus {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(STATUS_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(STATUS_FILE), self)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainSummary {
    pub demonstrations: usize,
    pub positive_demonstrations: usize,
    pub embedding_initial_holdout: f64,
    pub embedding_final_holdout: f64,
    pub dynamics_initial_holdout: f64,
    pub dynamics_final_holdout: f64,
}

/// Demonstrations plus the embedding and dynamics model trained on them.
#[derive(Debug, Clone)]
pub struct Pretrained {
    pub demos: Demonstrations,
    pub embedding: EmbeddingParams,
    pub alpha: f64,
    pub dynamics: DynamicsParams,
    pub summary: PretrainSummary,
    /// Transitions of every demonstration episode, encoded.
    pub transitions: Vec<Vec<Transition>>,
}

impl Pretrained {
    pub fn save(&self, dir: &Path) -> Result<()> {
        create_dir(dir)?;
        write_demonstrations(&dir.join(DEMOS_DIR), &self.demos)?;
        self.embedding.to_checkpoint(self.alpha)?.write(&dir.join(EMBEDDING_FILE))?;
        self.dynamics.to_checkpoint()?.write(&dir.join(DYNAMICS_FILE))?;
        write_json(&dir.join(PRETRAIN_SUMMARY), &self.summary)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let demos = read_demonstrations(&dir.join(DEMOS_DIR))?;
        let (embedding, alpha) = EmbeddingParams::from_checkpoint(&Checkpoint::read(&dir.join(EMBEDDING_FILE))?)?;
        let dynamics = DynamicsParams::from_checkpoint(&Checkpoint::read(&dir.join(DYNAMICS_FILE))?)?;
        let path = dir.join(PRETRAIN_SUMMARY);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let summary = serde_json::from_str(&text)?;
        let transitions = encode_demos(&demos, &embedding, dynamics.stack())?;
        Ok(Self {
            demos,
            embedding,
            alpha,
            dynamics,
            summary,
            transitions,
        })
    }

    /// Indices of successful demonstrations in dataset order.
    fn positives(&self) -> impl Iterator<Item = usize> + '_ {
        self.demos.episodes.iter().enumerate().filter(|(_, e)| e.success).map(|(i, _)| i)
    }
}

fn encode_demos(demos: &Demonstrations, embedding: &EmbeddingParams, k: usize) -> Result<Vec<Vec<Transition>>> {
    demos
        .episodes
        .iter()
        .map(|ep| {
            let latents: Vec<Vec<f64>> =
                embedding.encode_batch(&ep.frames)?.into_iter().map(|z| z.into_vec()).collect();
            Ok(episode_transitions(&latents, &ep.actions, &ep.rewards, &ep.dones, k))
        })
        .collect()
}

fn dynamics_sample(t: &Transition, d: usize) -> DynamicsSample {
    DynamicsSample {
        z: t.z.clone(),
        action: t.a.clone(),
        next: t.z_next[t.z_next.len() - d..].to_vec(),
    }
}

/// Generates demonstrations, then trains the embedding and the dynamics model on them.
pub fn generate_demos(config: &ExperimentConfig, seed: u64) -> Result<Demonstrations> {
    let mut env = config.env.build()?;
    let mut rng = rng_for(seed, STREAM_DEMOS);
    generate_demonstrations(env.as_mut(), config.demos.total, config.demos.positive, &mut rng)
}

pub fn pretrain(config: &ExperimentConfig, seed: u64) -> Result<Pretrained> {
    pretrain_from(config, seed, generate_demos(config, seed)?)
}

pub fn pretrain_from(config: &ExperimentConfig, seed: u64, demos: Demonstrations) -> Result<Pretrained> {
    config.validate()?;
    let env = config.env.build()?;
    let spec = env.spec();
    let embedded = train_embedding(&demos.images(), &config.embedding, seed)?;
    log::info!(
        "embedding holdout loss {:.4} -> {:.4}",
        embedded.initial_holdout_loss,
        embedded.final_holdout_loss
    );
    let d = config.embedding.latent_dim;
    let transitions = encode_demos(&demos, &embedded.params, spec.stack)?;
    let samples: Vec<DynamicsSample> = transitions.iter().flatten().map(|t| dynamics_sample(t, d)).collect();
    let mut rng = rng_for(seed, STREAM_DYNAMICS);
    let init = DynamicsParams::new(spec.stack, d, spec.bounds.dim(), &config.dynamics.hidden, &mut rng)?;
    let dynamics = train_dynamics(init, &samples, &config.dynamics, config.dynamics.pretrain_steps, seed)?;
    log::info!(
        "dynamics holdout loss {:.4} -> {:.4}",
        dynamics.initial_holdout_loss,
        dynamics.final_holdout_loss
    );
    let summary = PretrainSummary {
        demonstrations: demos.episodes.len(),
        positive_demonstrations: demos.num_positive(),
        embedding_initial_holdout: embedded.initial_holdout_loss,
        embedding_final_holdout: embedded.final_holdout_loss,
        dynamics_initial_holdout: dynamics.initial_holdout_loss,
        dynamics_final_holdout: dynamics.final_holdout_loss,
    };
    Ok(Pretrained {
        demos,
        embedding: embedded.params,
        alpha: config.embedding.alpha,
        dynamics: dynamics.params,
        summary,
        transitions,
    })
}

struct Episode {
    reward: f64,
    success: bool,
    transitions: Vec<Transition>,
}

/// Rolls out one episode; `choose` maps (stacked latent, step) to an action.
fn rollout_episode(
    env: &mut dyn Environment,
    embedding: &EmbeddingParams,
    rng: &mut ChaCha8Rng,
    mut choose: impl FnMut(&[f64], usize) -> Result<Vec<f64>>,
) -> Result<Episode> {
    let k = env.spec().stack;
    let first = env.reset(rng);
    let mut z = embedding.encode(&first.observation)?.into_vec().repeat(k);
    let d = z.len() / k;
    let mut out = Episode {
        reward: 0.0,
        success: false,
        transitions: Vec::new(),
    };
    for step in 0..env.spec().episode_len {
        let action = choose(&z, step)?;
        let result = env.step(&action)?;
        let latest = embedding.encode(&result.observation)?.into_vec();
        let mut next = Vec::with_capacity(z.len());
        next.extend_from_slice(&z[d..]);
        next.extend_from_slice(&latest);
        out.reward += result.reward;
        out.success |= result.info.success;
        out.transitions.push(Transition {
            z: std::mem::replace(&mut z, next.clone()),
            a: action,
            r: result.reward,
            z_next: next,
            done: result.done,
        });
        if result.done {
            break;
        }
    }
    Ok(out)
}

fn record(episode: usize, stream: Stream, ep: &Episode, started: Instant, seed: u64) -> EpisodeRecord {
    EpisodeRecord {
        episode,
        stream,
        reward: ep.reward,
        success: ep.success,
        steps: ep.transitions.len(),
        seconds: started.elapsed().as_secs_f64(),
        seed,
    }
}

/// Final state of a training run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub records: Vec<EpisodeRecord>,
    pub agent: AgentParams,
    pub dynamics: DynamicsParams,
}

fn save_checkpoint(dir: &Path, agent: &Agent, dynamics: &DynamicsParams) -> Result<()> {
    create_dir(dir)?;
    agent.params.to_checkpoint(agent.steps_taken())?.write(&dir.join(AGENT_FILE))?;
    dynamics.to_checkpoint()?.write(&dir.join(DYNAMICS_FILE))
}

/// Directory of the checkpoint written after `episode`, or the final one.
pub fn checkpoint_dir(out: &Path, episode: Option<usize>) -> PathBuf {
    match episode {
        Some(e) => out.join(CHECKPOINT_DIR).join(format!("episode_{e:05}")),
        None => out.join(CHECKPOINT_DIR).join("final"),
    }
}

/// The training loop: explore for one episode, refit dynamics (and the
/// reward model when planning uses it), train the agent, then optionally
/// evaluate the deterministic actor.
///
/// Writes `status.json`, `metrics.jsonl`, checkpoints and, for trajectory
/// optimization, `planner_trace.jsonl` under `out`. On error the status is
/// marked failed and everything written so far is kept.
pub fn train(config: &ExperimentConfig, seed: u64, pretrained: &Pretrained, out: &Path) -> Result<RunOutcome> {
    create_dir(out)?;
    let mut status = RunStatus {
        label: config.method_label(),
        seed,
        env: config.env.name().to_string(),
        state: RunState::Running,
        episodes_planned: config.episodes,
        episodes_completed: 0,
        error: None,
    };
    status.write(out)?;
    let result = train_loop(config, seed, pretrained, out, &mut status);
    match &result {
        Ok(_) => status.state = RunState::Completed,
        Err(e) => {
            status.state = RunState::Failed;
            status.error = Some(e.to_string());
        }
    }
    status.write(out)?;
    result
}

fn train_loop(
    config: &ExperimentConfig,
    seed: u64,
    pre: &Pretrained,
    out: &Path,
    status: &mut RunStatus,
) -> Result<RunOutcome> {
    config.validate()?;
    let mut env = config.env.build()?;
    let spec = env.spec().clone();
    let d = pre.embedding.latent_dim();
    let state_dim = spec.stack * d;
    if pre.dynamics.stack() != spec.stack || pre.dynamics.latent_dim() != d || pre.dynamics.action_dim() != spec.bounds.dim()
    {
        return Err(Error::config("pretrained models do not match the environment"));
    }

    let mut init_rng = rng_for(seed, STREAM_INIT);
    let mut learn_rng = rng_for(seed, STREAM_LEARN);
    let mut explore_rng = rng_for(seed, STREAM_EXPLORE);
    let mut env_rng = rng_for(seed, STREAM_ENV);
    let mut eval_rng = rng_for(seed, STREAM_EVAL);

    let params = AgentParams::new(state_dim, spec.bounds.clone(), &config.agent, &mut init_rng)?;
    let mut agent = Agent::new(params, &config.agent)?;
    let mut model = DynamicsTrainer::new(pre.dynamics.clone(), &config.dynamics)?;
    let mut reward_model = if config.uses_reward_model() {
        Some(RewardModel::new(state_dim, &config.reward_model, &mut init_rng)?)
    } else {
        None
    };
    let mut ou = OuProcess::new(spec.bounds.dim(), config.ou.clone());

    let mut buffer = ReplayBuffer::new(config.agent.replay_capacity);
    let seeded: Vec<usize> = pre.positives().take(config.demos.seed_replay).collect();
    if seeded.len() < config.demos.seed_replay {
        return Err(Error::InsufficientData(format!(
            "{} positive demonstrations available, {} requested for replay",
            seeded.len(),
            config.demos.seed_replay
        )));
    }
    for &i in &seeded {
        buffer.extend(pre.transitions[i].iter().cloned());
    }
    let all_demo = pre.transitions.iter().flatten();
    let mut model_samples: Vec<DynamicsSample> = all_demo.clone().map(|t| dynamics_sample(t, d)).collect();
    let mut reward_samples: Vec<RewardSample> = all_demo
        .map(|t| RewardSample {
            z: t.z_next.clone(),
            r: t.r,
        })
        .collect();

    if config.episodes == 0 {
        return Ok(RunOutcome {
            records: Vec::new(),
            agent: agent.params,
            dynamics: model.params,
        });
    }
    let mut metrics = JsonlWriter::append(&out.join(METRICS_FILE))?;
    let mut traces = match config.explorer {
        ExplorerKind::TrajOpt => Some(JsonlWriter::append(&out.join(TRACE_FILE))?),
        ExplorerKind::Ou => None,
    };
    let mut records = Vec::new();

    for episode in 1..=config.episodes {
        let started = Instant::now();
        ou.reset();
        let explored = {
            let critic = critic_for(&agent.params, &model.params);
            let context = PlanContext {
                critic: critic.as_ref(),
                dynamics: &model.params,
                reward: reward_model.as_ref().map(|r| r as &dyn StateReward),
                policy: &agent.params,
            };
            rollout_episode(env.as_mut(), &pre.embedding, &mut env_rng, |z, step| {
                let mode = match config.explorer {
                    ExplorerKind::Ou => ExploreMode::Ou(&mut ou),
                    ExplorerKind::TrajOpt => ExploreMode::TrajOpt {
                        config: &config.planner,
                        context,
                    },
                };
                let (action, plan) = explore_action(z, &agent.params, &spec.bounds, mode, &mut explore_rng)?;
                if let (Some(writer), Some(plan)) = (traces.as_mut(), plan) {
                    writer.write(&TraceRecord {
                        seed,
                        episode,
                        step,
                        initial_objective: plan.initial_objective,
                        final_objective: plan.final_objective,
                        iterations: plan.iterations,
                        fallback: plan.fallback,
                        trace: plan.trace,
                    })?;
                }
                Ok(action)
            })?
        };
        for t in &explored.transitions {
            model_samples.push(dynamics_sample(t, d));
            reward_samples.push(RewardSample {
                z: t.z_next.clone(),
                r: t.r,
            });
        }
        buffer.extend(explored.transitions.iter().cloned());

        model.fit(&model_samples, config.dynamics.steps_per_episode, &mut learn_rng)?;
        if let Some(rm) = reward_model.as_mut() {
            rm.fit(&reward_samples, config.reward_model.steps_per_episode, &mut learn_rng)?;
        }
        for _ in 0..config.agent.train_steps_per_episode {
            agent.train_step(&buffer, Some(&model.params), &mut learn_rng)?;
        }
        let rec = record(episode, Stream::Explore, &explored, started, seed);
        metrics.write(&rec)?;
        records.push(rec);

        if config.evaluate {
            let started = Instant::now();
            let evaluated = rollout_episode(env.as_mut(), &pre.embedding, &mut eval_rng, |z, _| Ok(agent.params.act(z)))?;
            let rec = record(episode, Stream::Eval, &evaluated, started, seed);
            metrics.write(&rec)?;
            records.push(rec);
        }
        if config.checkpoint_every > 0 && episode % config.checkpoint_every == 0 {
            save_checkpoint(&checkpoint_dir(out, Some(episode)), &agent, &model.params)?;
        }
        status.episodes_completed = episode;
        status.write(out)?;
        log::debug!("seed {seed} episode {episode}: reward {:.3}", explored.reward);
    }
    save_checkpoint(&checkpoint_dir(out, None), &agent, &model.params)?;
    Ok(RunOutcome {
        records,
        agent: agent.params,
        dynamics: model.params,
    })
}

/// Pretraining followed by training, all under `out`.
pub fn run_experiment(config: &ExperimentConfig, seed: u64, out: &Path) -> Result<RunOutcome> {
    create_dir(out)?;
    let path = out.join(CONFIG_FILE);
    std::fs::write(&path, config.to_toml()?).map_err(|e| Error::io(&path, e))?;
    let pretrained = match pretrain(config, seed) {
        Ok(p) => p,
        Err(e) => {
            RunStatus {
                label: config.method_label(),
                seed,
                env: config.env.name().to_string(),
                state: RunState::Failed,
                episodes_planned: config.episodes,
                episodes_completed: 0,
                error: Some(e.to_string()),
            }
            .write(out)?;
            return Err(e);
        }
    };
    pretrained.save(&out.join(PRETRAIN_DIR))?;
    train(config, seed, &pretrained, out)
}

/// Deterministic-actor episodes from a saved checkpoint directory.
pub fn evaluate_checkpoint(
    config: &ExperimentConfig,
    embedding: &EmbeddingParams,
    checkpoint: &Path,
    episodes: usize,
    seed: u64,
) -> Result<Vec<EpisodeRecord>> {
    let (agent, _) = AgentParams::from_checkpoint(&Checkpoint::read(&checkpoint.join(AGENT_FILE))?)?;
    let mut env = config.env.build()?;
    if agent.state_dim() != env.spec().stack * embedding.latent_dim() {
        return Err(Error::config("checkpoint does not match the embedding and environment"));
    }
    let mut rng = rng_for(seed, STREAM_EVAL);
    (1..=episodes)
        .map(|episode| {
            let started = Instant::now();
            let ep = rollout_episode(env.as_mut(), embedding, &mut rng, |z, _| Ok(agent.act(z)))?;
            Ok(record(episode, Stream::Eval, &ep, started, seed))
        })
        .collect()
}
