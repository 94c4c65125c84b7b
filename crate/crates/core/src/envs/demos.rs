use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Environment;
use crate::agent::{ReplayBuffer, Transition};
use crate::embedding::{read_dataset, write_dataset, EmbeddingParams, Image, ImageDataset};
use crate::error::{Error, Result};

const EPISODES_FILE: &str = "episodes.json";
/// Attempts allowed per requested episode before giving up.
const RETRIES_PER_EPISODE: usize = 20;

/// One recorded episode; `frames` holds the reset frame plus one per step.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoEpisode {
    pub frames: Vec<Image>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub success: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Demonstrations {
    pub episodes: Vec<DemoEpisode>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EpisodeRecord {
    actions: Vec<Vec<f64>>,
    rewards: Vec<f64>,
    dones: Vec<bool>,
    success: bool,
}

impl Demonstrations {
    pub fn num_positive(&self) -> usize {
        self.episodes.iter().filter(|e| e.success).count()
    }

    pub fn num_steps(&self) -> usize {
        self.episodes.iter().map(|e| e.actions.len()).sum()
    }

    pub fn images(&self) -> ImageDataset {
        ImageDataset {
            episodes: self.episodes.iter().map(|e| e.frames.clone()).collect(),
        }
    }
}

fn record_episode(
    env: &mut dyn Environment,
    rng: &mut ChaCha8Rng,
    mut policy: impl FnMut(&dyn Environment, &mut ChaCha8Rng) -> Vec<f64>,
) -> Result<DemoEpisode> {
    let first = env.reset(rng);
    let mut ep = DemoEpisode {
        frames: vec![first.observation],
        actions: Vec::new(),
        rewards: Vec::new(),
        dones: Vec::new(),
        success: false,
    };
    loop {
        let a = policy(&*env, rng);
        let r = env.step(&a)?;
        ep.frames.push(r.observation);
        ep.actions.push(a);
        ep.rewards.push(r.reward);
        ep.dones.push(r.done);
        if r.done {
            ep.success = r.info.success;
            return Ok(ep);
        }
    }
}

/// Records `n_positive` successful scripted episodes followed by
/// `n_total − n_positive` unsuccessful random-walk episodes.
pub fn generate_demonstrations(
    env: &mut dyn Environment,
    n_total: usize,
    n_positive: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Demonstrations> {
    if n_positive > n_total {
        return Err(Error::config("more positive demonstrations than episodes requested"));
    }
    let bounds = env.spec().bounds.clone();
    let mut out = Demonstrations::default();
    let mut attempts = 0;
    while out.num_positive() < n_positive {
        if attempts >= RETRIES_PER_EPISODE * n_positive {
            return Err(Error::ControllerFailure {
                wanted: n_positive,
                attempts,
            });
        }
        attempts += 1;
        let mut missing = false;
        let ep = record_episode(env, rng, |env, rng| {
            env.scripted_action(rng).unwrap_or_else(|| {
                missing = true;
                bounds.mid()
            })
        })?;
        if missing {
            return Err(Error::config(format!(
                "{} has no scripted controller for positive demonstrations",
                env.spec().name
            )));
        }
        if ep.success {
            out.episodes.push(ep);
        }
    }
    let n_negative = n_total - n_positive;
    let half = bounds.half_width();
    let steps: Vec<Normal<f64>> = half
        .iter()
        .map(|h| Normal::new(0.0, 0.3 * h).expect("box widths are finite"))
        .collect();
    let mut attempts = 0;
    let mut negatives = 0;
    while negatives < n_negative {
        if attempts >= RETRIES_PER_EPISODE * n_negative {
            return Err(Error::ControllerFailure {
                wanted: n_negative,
                attempts,
            });
        }
        attempts += 1;
        let mut a = bounds.mid();
        let ep = record_episode(env, rng, |_, rng| {
            for (v, n) in a.iter_mut().zip(&steps) {
                *v += n.sample(rng);
            }
            bounds.project(&mut a);
            a.clone()
        })?;
        if !ep.success {
            out.episodes.push(ep);
            negatives += 1;
        }
    }
    Ok(out)
}

pub fn write_demonstrations(dir: &Path, demos: &Demonstrations) -> Result<()> {
    write_dataset(dir, &demos.images())?;
    let records: Vec<EpisodeRecord> = demos
        .episodes
        .iter()
        .map(|e| EpisodeRecord {
            actions: e.actions.clone(),
            rewards: e.rewards.clone(),
            dones: e.dones.clone(),
            success: e.success,
        })
        .collect();
    let path = dir.join(EPISODES_FILE);
    std::fs::write(&path, serde_json::to_vec(&records)?).map_err(|e| Error::io(&path, e))
}

pub fn read_demonstrations(dir: &Path) -> Result<Demonstrations> {
    let images = read_dataset(dir)?;
    let path = dir.join(EPISODES_FILE);
    let text = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let records: Vec<EpisodeRecord> = serde_json::from_slice(&text)?;
    if records.len() != images.episodes.len() {
        return Err(Error::config("episode manifest and frames disagree on episode count"));
    }
    let episodes = images
        .episodes
        .into_iter()
        .zip(records)
        .map(|(frames, r)| {
            if frames.len() != r.actions.len() + 1 || r.rewards.len() != r.actions.len() || r.dones.len() != r.actions.len() {
                return Err(Error::config("episode manifest and frames disagree on length"));
            }
            Ok(DemoEpisode {
                frames,
                actions: r.actions,
                rewards: r.rewards,
                dones: r.dones,
                success: r.success,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Demonstrations { episodes })
}

/// Stacked states `Z_0..Z_T` from per-frame latents; the first frame fills
/// the stack before enough history exists.
pub fn stack_latents(latents: &[Vec<f64>], k: usize) -> Vec<Vec<f64>> {
    (0..latents.len())
        .map(|t| {
            (0..k)
                .flat_map(|i| {
                    let src = (t + i + 1).saturating_sub(k);
                    latents[src].iter().copied()
                })
                .collect()
        })
        .collect()
}

/// Transitions of one episode given the latent of every frame.
pub fn episode_transitions(
    latents: &[Vec<f64>],
    actions: &[Vec<f64>],
    rewards: &[f64],
    dones: &[bool],
    k: usize,
) -> Vec<Transition> {
    let stacks = stack_latents(latents, k);
    (0..actions.len())
        .map(|t| Transition {
            z: stacks[t].clone(),
            a: actions[t].clone(),
            r: rewards[t],
            z_next: stacks[t + 1].clone(),
            done: dones[t],
        })
        .collect()
}

/// Encodes the first `n_seed` successful episodes into `buffer`; returns the
/// number of transitions added.
pub fn seed_replay(
    buffer: &mut ReplayBuffer,
    demos: &Demonstrations,
    n_seed: usize,
    encoder: &EmbeddingParams,
    k: usize,
) -> Result<usize> {
    if n_seed == 0 {
        return Ok(0);
    }
    let positives: Vec<&DemoEpisode> = demos.episodes.iter().filter(|e| e.success).take(n_seed).collect();
    if positives.len() < n_seed {
        return Err(Error::InsufficientData(format!(
            "{} positive demonstrations available, {n_seed} requested",
            positives.len()
        )));
    }
    let mut added = 0;
    for ep in positives {
        let latents: Vec<Vec<f64>> = encoder.encode_batch(&ep.frames)?.into_iter().map(|z| z.into_vec()).collect();
        let ts = episode_transitions(&latents, &ep.actions, &ep.rewards, &ep.dones, k);
        added += ts.len();
        buffer.extend(ts);
    }
    Ok(added)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{Peg2d, Peg2dConfig, Runner, RunnerConfig};
    use rand::SeedableRng;

    fn small_peg() -> Peg2d {
        Peg2d::new(Peg2dConfig {
            image_size: 16,
            channels: 1,
            peg_radius: 1.0,
            ..Peg2dConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn default_split_has_exact_positive_count() {
        let mut env = small_peg();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let demos = generate_demonstrations(&mut env, 50, 19, &mut rng).unwrap();
        assert_eq!(demos.episodes.len(), 50);
        assert_eq!(demos.num_positive(), 19);
        let bounds = env.spec().bounds.clone();
        for ep in &demos.episodes {
            assert!(ep.actions.iter().all(|a| bounds.contains(a)));
            assert_eq!(ep.frames.len(), ep.actions.len() + 1);
            assert!(*ep.dones.last().unwrap());
        }
        let none = generate_demonstrations(&mut env, 5, 0, &mut rng).unwrap();
        assert_eq!(none.num_positive(), 0);
    }

    #[test]
    fn runner_has_no_positive_demonstrations() {
        let mut env = Runner::new(RunnerConfig {
            image_size: 8,
            episode_len: 5,
            ..RunnerConfig::default()
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(generate_demonstrations(&mut env, 3, 1, &mut rng).is_err());
        assert_eq!(generate_demonstrations(&mut env, 3, 0, &mut rng).unwrap().num_steps(), 15);
    }

    #[test]
    fn round_trip_and_replay_seeding() {
        let mut env = small_peg();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let demos = generate_demonstrations(&mut env, 8, 6, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_demonstrations(dir.path(), &demos).unwrap();
        let back = read_demonstrations(dir.path()).unwrap();
        assert_eq!(back.episodes.len(), 8);
        assert_eq!(back.num_positive(), 6);
        assert_eq!(back.episodes[3].actions, demos.episodes[3].actions);

        let encoder = EmbeddingParams::new(env.spec().image, 4, &[2], &mut rng).unwrap();
        let mut buffer = ReplayBuffer::new(1000);
        assert_eq!(seed_replay(&mut buffer, &back, 0, &encoder, 1).unwrap(), 0);
        assert!(buffer.is_empty());
        let added = seed_replay(&mut buffer, &back, 5, &encoder, 1).unwrap();
        let expected: usize = back.episodes.iter().filter(|e| e.success).take(5).map(|e| e.actions.len()).sum();
        assert_eq!((added, buffer.len()), (expected, expected));
        assert!(buffer.iter().all(|t| t.r >= 0.0));
        assert!(seed_replay(&mut buffer, &back, 7, &encoder, 1).is_err());
    }

    #[test]
    fn stacks_pad_with_the_first_frame() {
        let lat: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64]).collect();
        let s = stack_latents(&lat, 3);
        assert_eq!(s[0], vec![0.0, 0.0, 0.0]);
        assert_eq!(s[1], vec![0.0, 0.0, 1.0]);
        assert_eq!(s[3], vec![1.0, 2.0, 3.0]);
    }
}
