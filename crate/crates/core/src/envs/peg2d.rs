use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::render::{Canvas, Color};
use super::{EnvSpec, Environment, RewardKind, StepInfo, StepResult};
use crate::agent::ActionBox;
use crate::embedding::{Image, ImageShape};
use crate::error::{Error, Result};

const BACKGROUND: Color = [0.1, 0.1, 0.1];
const SOLID: Color = [0.45, 0.45, 0.5];
const PEG: Color = [1.0, 1.0, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Peg2dConfig {
    pub image_size: usize,
    pub channels: usize,
    pub start_mean: [f64; 2],
    pub start_std: f64,
    pub slot_center: f64,
    pub slot_width: f64,
    pub slot_depth: f64,
    pub max_delta: f64,
    pub episode_len: usize,
    pub success_depth: f64,
    /// Disc radius in pixels.
    pub peg_radius: f64,
    /// Per-component standard deviation of the scripted controller's noise.
    pub script_noise: f64,
}

impl Default for Peg2dConfig {
    fn default() -> Self {
        Self {
            image_size: 64,
            channels: 3,
            start_mean: [0.3, 0.55],
            start_std: 0.05,
            slot_center: 0.5,
            slot_width: 0.08,
            slot_depth: 0.2,
            max_delta: 0.05,
            episode_len: 20,
            success_depth: 0.9,
            peg_radius: 2.0,
            script_noise: 0.01,
        }
    }
}

/// Peg-in-slot task in the unit square.
///
/// Below `slot_depth` everything except the slot channel is solid; motion into
/// solid material is stopped at its surface one axis at a time. Leaving the
/// square through the sides or the top ends the episode with reward −1.
/// Inside the channel the reward is the insertion depth fraction and the
/// episode ends once it reaches `success_depth`.
#[derive(Debug, Clone)]
pub struct Peg2d {
    config: Peg2dConfig,
    spec: EnvSpec,
    pos: [f64; 2],
    t: usize,
}

impl Peg2d {
    pub fn new(config: Peg2dConfig) -> Result<Self> {
        let c = &config;
        if c.image_size == 0 || !(c.channels == 1 || c.channels == 3) {
            return Err(Error::config("peg2d renders 1- or 3-channel images of positive size"));
        }
        if c.episode_len == 0 || c.max_delta <= 0.0 || c.slot_width <= 0.0 || c.slot_depth <= 0.0 {
            return Err(Error::config("peg2d geometry must be positive"));
        }
        let spec = EnvSpec {
            name: "peg2d",
            bounds: ActionBox::uniform(2, -c.max_delta, c.max_delta)?,
            episode_len: c.episode_len,
            stack: 1,
            reward: RewardKind::Sparse,
            image: ImageShape {
                height: c.image_size,
                width: c.image_size,
                channels: c.channels,
            },
        };
        Ok(Self {
            pos: config.start_mean,
            config,
            spec,
            t: 0,
        })
    }

    pub fn config(&self) -> &Peg2dConfig {
        &self.config
    }

    pub fn position(&self) -> [f64; 2] {
        self.pos
    }

    /// Places the peg directly, for tests and diagnostics.
    pub fn set_position(&mut self, pos: [f64; 2]) {
        self.pos = pos;
    }

    fn in_channel_x(&self, x: f64) -> bool {
        (x - self.config.slot_center).abs() <= 0.5 * self.config.slot_width
    }

    fn in_workspace(&self) -> bool {
        let [x, y] = self.pos;
        (0.0..=1.0).contains(&x) && y <= 1.0
    }

    /// Insertion depth fraction when inside the channel.
    pub fn depth_fraction(&self) -> Option<f64> {
        let [x, y] = self.pos;
        let d = self.config.slot_depth;
        (self.in_channel_x(x) && y < d).then(|| ((d - y) / d).clamp(0.0, 1.0))
    }

    pub fn render(&self) -> Image {
        let c = &self.config;
        let mut canvas = Canvas::new(self.spec.image, BACKGROUND);
        let (lo, hi) = (c.slot_center - 0.5 * c.slot_width, c.slot_center + 0.5 * c.slot_width);
        canvas.fill_where(SOLID, |u, v| v < c.slot_depth && !(lo..=hi).contains(&u));
        canvas.disc(self.pos[0], self.pos[1], c.peg_radius, PEG);
        canvas.finish()
    }

    fn result(&self, reward: f64, done: bool, success: bool) -> StepResult {
        StepResult {
            observation: self.render(),
            reward,
            done,
            info: StepInfo {
                state: self.pos.to_vec(),
                success,
            },
        }
    }
}

impl Environment for Peg2d {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut ChaCha8Rng) -> StepResult {
        let c = &self.config;
        let normal = Normal::new(0.0, c.start_std).expect("start_std is finite");
        let margin = 1e-3;
        let x = (c.start_mean[0] + normal.sample(rng)).clamp(margin, 1.0 - margin);
        let y = (c.start_mean[1] + normal.sample(rng)).clamp(c.slot_depth, 1.0 - margin);
        self.pos = [x, y];
        self.t = 0;
        self.result(0.0, false, false)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        self.spec.bounds.check(action)?;
        let (depth, half) = (self.config.slot_depth, 0.5 * self.config.slot_width);
        let (lo, hi) = (self.config.slot_center - half, self.config.slot_center + half);
        let [mut x, mut y] = self.pos;
        x += action[0];
        if y < depth {
            x = x.clamp(lo, hi);
        }
        y += action[1];
        if y < depth && !self.in_channel_x(x) {
            y = depth;
        }
        y = y.max(0.0);
        self.pos = [x, y];
        self.t += 1;
        let timeout = self.t >= self.spec.episode_len;
        if !self.in_workspace() {
            return Ok(self.result(-1.0, true, false));
        }
        match self.depth_fraction() {
            Some(r) if r >= self.config.success_depth => Ok(self.result(r, true, true)),
            Some(r) => Ok(self.result(r, timeout, false)),
            None => Ok(self.result(0.0, timeout, false)),
        }
    }

    /// Moves above the slot, then straight down, with Gaussian noise.
    fn scripted_action(&self, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
        let c = &self.config;
        let [x, y] = self.pos;
        let dx = c.slot_center - x;
        let hover = c.slot_depth + 0.02;
        let dy = if dx.abs() > 0.25 * c.slot_width && y > c.slot_depth {
            // stay above the surface until aligned
            (hover - y).max(-c.max_delta)
        } else {
            -c.max_delta
        };
        let noise = Normal::new(0.0, c.script_noise).expect("script_noise is finite");
        let a = [dx + noise.sample(rng), dy + noise.sample(rng)];
        Some(self.spec.bounds.clip(&a))
    }
}

#[cfg(test)]
mod tests {
    use super::super::render::centroid;
    use super::*;
    use rand::SeedableRng;

    fn env() -> Peg2d {
        Peg2d::new(Peg2dConfig::default()).unwrap()
    }

    #[test]
    fn reset_is_deterministic_and_inside() {
        let mut e = env();
        let a = e.reset(&mut ChaCha8Rng::seed_from_u64(3));
        let b = e.reset(&mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let r = e.reset(&mut rng);
            assert!(r.info.state.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn start_mean_matches_configuration() {
        let mut e = env();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 1000;
        let mut sum = [0.0; 2];
        for _ in 0..n {
            let s = e.reset(&mut rng).info.state;
            sum[0] += s[0];
            sum[1] += s[1];
        }
        let c = Peg2dConfig::default();
        // clipping is many standard deviations away from the mean
        let tol = 3.0 * c.start_std / (n as f64).sqrt();
        for (s, m) in sum.iter().zip(c.start_mean) {
            assert!((s / n as f64 - m).abs() < tol);
        }
    }

    #[test]
    fn flat_region_gives_zero_reward() {
        let mut e = env();
        e.reset(&mut ChaCha8Rng::seed_from_u64(0));
        e.set_position([0.5, 0.6]);
        let r = e.step(&[0.0, 0.0]).unwrap();
        assert_eq!((r.reward, r.done), (0.0, false));
    }

    #[test]
    fn leaving_the_workspace_costs_one() {
        let mut e = env();
        e.reset(&mut ChaCha8Rng::seed_from_u64(0));
        e.set_position([0.98, 0.6]);
        let r = e.step(&[0.05, 0.0]).unwrap();
        assert_eq!((r.reward, r.done, r.info.success), (-1.0, true, false));
        e.set_position([0.5, 0.99]);
        assert_eq!(e.step(&[0.0, 0.05]).unwrap().reward, -1.0);
    }

    #[test]
    fn slot_bottom_is_full_success() {
        let mut e = env();
        e.reset(&mut ChaCha8Rng::seed_from_u64(0));
        e.set_position([0.5, 0.03]);
        let r = e.step(&[0.0, -0.05]).unwrap();
        assert_eq!(r.reward, 1.0);
        assert!(r.done && r.info.success);
        e.set_position([0.5, 0.15]);
        let r = e.step(&[0.0, -0.05]).unwrap();
        assert!((r.reward - 0.5).abs() < 1e-12);
        assert!(!r.done);
    }

    #[test]
    fn solid_material_blocks_motion() {
        let mut e = env();
        e.reset(&mut ChaCha8Rng::seed_from_u64(0));
        e.set_position([0.3, 0.22]);
        let r = e.step(&[0.0, -0.05]).unwrap();
        assert_eq!(r.info.state, vec![0.3, 0.2]);
        e.set_position([0.5, 0.1]);
        let r = e.step(&[0.05, 0.0]).unwrap();
        assert_eq!(r.info.state[0], 0.54);
    }

    #[test]
    fn episode_times_out() {
        let mut e = env();
        e.reset(&mut ChaCha8Rng::seed_from_u64(0));
        e.set_position([0.2, 0.6]);
        for t in 1..=20 {
            let r = e.step(&[0.0, 0.0]).unwrap();
            assert_eq!(r.done, t == 20);
        }
    }

    #[test]
    fn out_of_box_action_is_rejected() {
        let mut e = env();
        e.reset(&mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(e.step(&[0.06, 0.0]), Err(Error::ActionOutOfBox { .. })));
    }

    #[test]
    fn rendered_dot_matches_state() {
        let mut e = env();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let r = e.reset(&mut rng);
            let (u, v) = centroid(&r.observation, 1.0).unwrap();
            let px = 1.0 / 64.0;
            assert!((u - r.info.state[0]).abs() <= px);
            assert!((v - r.info.state[1]).abs() <= px);
        }
    }

    #[test]
    fn scripted_controller_usually_succeeds() {
        let mut e = env();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut wins = 0;
        for _ in 0..20 {
            e.reset(&mut rng);
            loop {
                let a = e.scripted_action(&mut rng).unwrap();
                let r = e.step(&a).unwrap();
                if r.done {
                    wins += r.info.success as usize;
                    break;
                }
            }
        }
        assert!(wins >= 15, "{wins}/20");
    }
}
