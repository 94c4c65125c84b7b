use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{loss_and_grad, mean_loss, sample_triplets, EmbeddingConfig, EmbeddingParams, ImageDataset, LossTerms};
use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig};

const HOLDOUT_TRIPLETS: usize = 256;

#[derive(Debug, Clone)]
pub struct EmbeddingTraining {
    pub params: EmbeddingParams,
    pub initial_holdout_loss: f64,
    pub final_holdout_loss: f64,
    /// Mean training-batch loss per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Trains encoder and decoder from scratch with mini-batch Adam.
///
/// The last `holdout_fraction` of the episodes (at least one when there are
/// two or more) is held out; a fixed set of held-out triplets is scored
/// before and after training.
pub fn train_embedding(dataset: &ImageDataset, config: &EmbeddingConfig, seed: u64) -> Result<EmbeddingTraining> {
    if dataset.num_frames() == 0 {
        return Err(Error::EmptyDataset("embedding dataset has no frames".into()));
    }
    if config.alpha <= 0.0 || config.batch_size == 0 {
        return Err(Error::config("embedding training needs alpha > 0 and batch_size > 0"));
    }
    let shape = dataset.shape()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = EmbeddingParams::new(shape, config.latent_dim, &config.conv_channels, &mut rng)?;

    let episodes = &dataset.episodes;
    let n_hold = if episodes.len() >= 2 {
        ((episodes.len() as f64 * config.holdout_fraction).round() as usize).clamp(1, episodes.len() - 1)
    } else {
        0
    };
    let (train, hold) = episodes.split_at(episodes.len() - n_hold);
    let eval_source = if hold.is_empty() { train } else { hold };
    let mut eval_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_e7a1);
    let eval = sample_triplets(eval_source, HOLDOUT_TRIPLETS, &mut eval_rng)?;

    let initial = mean_loss(&params, &eval, config.alpha)?;
    let train_frames: usize = train.iter().map(Vec::len).sum();
    let batches = train_frames.div_ceil(config.batch_size);
    let mut opt = Adam::new(AdamConfig::with_lr(config.lr));
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut step = 0;
    for epoch in 0..config.epochs {
        let mut sum = 0.0;
        for _ in 0..batches {
            let batch = sample_triplets(train, config.batch_size, &mut rng)?;
            let (loss, grads) = loss_and_grad(&params, &batch, config.alpha, LossTerms::TOTAL)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    stage: "embedding",
                    step,
                    loss,
                });
            }
            opt.step(&mut params, &grads)?;
            sum += loss;
            step += 1;
        }
        let mean = sum / batches as f64;
        log::debug!("embedding epoch {epoch}: loss {mean:.5}");
        epoch_losses.push(mean);
    }
    let final_loss = mean_loss(&params, &eval, config.alpha)?;
    if !final_loss.is_finite() {
        return Err(Error::Diverged {
            stage: "embedding",
            step,
            loss: final_loss,
        });
    }
    Ok(EmbeddingTraining {
        params,
        initial_holdout_loss: initial,
        final_holdout_loss: final_loss,
        epoch_losses,
    })
}
