//! Exploration through latent trajectory optimization for deterministic
//! actor-critic learning from pixels.
//!
//! Images are embedded onto a unit sphere by a time-contrastive autoencoder
//! ([`embedding`]); a learned forward model ([`dynamics`]) unrolls latent
//! trajectories; a DDPG agent with either a Q-function or a value-function
//! critic ([`agent`]) learns from replay; and exploratory actions come either
//! from Ornstein-Uhlenbeck noise or from optimizing an action sequence
//! through the learned model against the critic ([`exploration`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod checkpoint;
pub mod dynamics;
pub mod embedding;
pub mod envs;
pub mod error;
pub mod exploration;
pub mod harness;
pub mod nn;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
