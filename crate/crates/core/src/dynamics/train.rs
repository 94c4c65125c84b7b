use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{dynamics_loss_and_grad, mean_dynamics_loss, DynamicsConfig, DynamicsParams, DynamicsSample};
use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig};

/// Owns the model and its optimizer state so training can resume episode after episode.
#[derive(Debug, Clone)]
pub struct DynamicsTrainer {
    pub params: DynamicsParams,
    opt: Adam,
    batch_size: usize,
    steps: usize,
}

impl DynamicsTrainer {
    pub fn new(params: DynamicsParams, config: &DynamicsConfig) -> Result<Self> {
        if config.batch_size == 0 {
            return Err(Error::config("dynamics batch_size must be positive"));
        }
        Ok(Self {
            params,
            opt: Adam::new(AdamConfig::with_lr(config.lr)),
            batch_size: config.batch_size,
            steps: 0,
        })
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    /// Runs `steps` mini-batch updates on batches drawn uniformly with
    /// replacement; returns the mean batch loss (0 when `steps` is 0).
    pub fn fit<R: Rng + ?Sized>(&mut self, samples: &[DynamicsSample], steps: usize, rng: &mut R) -> Result<f64> {
        if steps == 0 {
            return Ok(0.0);
        }
        if samples.is_empty() {
            return Err(Error::EmptyDataset("no dynamics samples".into()));
        }
        let mut sum = 0.0;
        for _ in 0..steps {
            let batch: Vec<&DynamicsSample> = (0..self.batch_size)
                .map(|_| &samples[rng.random_range(0..samples.len())])
                .collect();
            let (loss, grads) = dynamics_loss_and_grad(&self.params, &batch)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    stage: "dynamics",
                    step: self.steps,
                    loss,
                });
            }
            self.opt.step(&mut self.params, &grads)?;
            self.steps += 1;
            sum += loss;
        }
        Ok(sum / steps as f64)
    }
}

#[derive(Debug, Clone)]
pub struct DynamicsTraining {
    pub params: DynamicsParams,
    pub initial_holdout_loss: f64,
    pub final_holdout_loss: f64,
}

/// Trains `init` on all but the last `holdout_fraction` of `samples` and
/// scores the held-out tail before and after.
pub fn train_dynamics(
    init: DynamicsParams,
    samples: &[DynamicsSample],
    config: &DynamicsConfig,
    steps: usize,
    seed: u64,
) -> Result<DynamicsTraining> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset("no dynamics samples".into()));
    }
    let n_hold = if samples.len() >= 2 {
        ((samples.len() as f64 * config.holdout_fraction).round() as usize).clamp(1, samples.len() - 1)
    } else {
        0
    };
    let (train, hold) = samples.split_at(samples.len() - n_hold);
    let eval: Vec<&DynamicsSample> = if hold.is_empty() { train.iter().collect() } else { hold.iter().collect() };
    let initial = mean_dynamics_loss(&init, &eval)?;
    let mut trainer = DynamicsTrainer::new(init, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    trainer.fit(train, steps, &mut rng)?;
    let final_loss = mean_dynamics_loss(&trainer.params, &eval)?;
    if !final_loss.is_finite() {
        return Err(Error::Diverged {
            stage: "dynamics",
            step: steps,
            loss: final_loss,
        });
    }
    Ok(DynamicsTraining {
        params: trainer.params,
        initial_holdout_loss: initial,
        final_holdout_loss: final_loss,
    })
}
