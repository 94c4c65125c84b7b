use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{AgentConfig, CriticKind};
use crate::dynamics::DynamicsConfig;
use crate::embedding::EmbeddingConfig;
use crate::envs::EnvConfig;
use crate::error::{Error, Result};
use crate::exploration::{ObjectiveKind, OuConfig, PlannerConfig, RewardConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExplorerKind {
    Ou,
    TrajOpt,
}

impl ExplorerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExplorerKind::Ou => "ou",
            ExplorerKind::TrajOpt => "trajopt",
        }
    }
}

/// Demonstration dataset used for pretraining and replay seeding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemoConfig {
    pub total: usize,
    pub positive: usize,
    /// Successful demonstrations copied into the replay buffer before training.
    pub seed_replay: usize,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            total: 50,
            positive: 19,
            seed_replay: 5,
        }
    }
}

/// One training run, as read from a TOML file. Every field has a default and
/// unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Method name used to group runs in reports; derived when absent.
    pub label: Option<String>,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub explorer: ExplorerKind,
    /// Run one deterministic evaluation episode after every training episode.
    pub evaluate: bool,
    /// Write checkpoints every this many episodes; 0 keeps only the final one.
    pub checkpoint_every: usize,
    pub output_dir: Option<PathBuf>,
    pub env: EnvConfig,
    pub demos: DemoConfig,
    pub embedding: EmbeddingConfig,
    pub dynamics: DynamicsConfig,
    pub agent: AgentConfig,
    pub planner: PlannerConfig,
    pub ou: OuConfig,
    pub reward_model: RewardConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            label: None,
            episodes: 300,
            seeds: vec![0],
            explorer: ExplorerKind::TrajOpt,
            evaluate: true,
            checkpoint_every: 0,
            output_dir: None,
            env: EnvConfig::default(),
            demos: DemoConfig::default(),
            embedding: EmbeddingConfig::default(),
            dynamics: DynamicsConfig::default(),
            agent: AgentConfig::default(),
            planner: PlannerConfig::default(),
            ou: OuConfig::default(),
            reward_model: RewardConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("cannot serialize config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let distinct: HashSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return Err(Error::config("seeds must be distinct"));
        }
        if self.demos.positive > self.demos.total || self.demos.seed_replay > self.demos.positive {
            return Err(Error::config("need seed_replay <= positive <= total demonstrations"));
        }
        if self.demos.total == 0 {
            return Err(Error::config("pretraining needs at least one demonstration"));
        }
        if let Some(w) = &self.planner.weights {
            if w.len() != self.planner.horizon + 1 {
                return Err(Error::config("planner weights need horizon + 1 entries"));
            }
        }
        if self.agent.critic == CriticKind::V && self.dynamics.hidden.is_empty() {
            return Err(Error::config("the value critic needs a dynamics network"));
        }
        Ok(())
    }

    pub fn uses_reward_model(&self) -> bool {
        self.explorer == ExplorerKind::TrajOpt && self.planner.objective == ObjectiveKind::RewardPlusQ
    }

    /// `label` if set, otherwise critic, explorer and (for planning) horizon.
    pub fn method_label(&self) -> String {
        if let Some(label) = &self.label {
            return label.clone();
        }
        match self.explorer {
            ExplorerKind::Ou => format!("{}-ou", self.agent.critic.as_str()),
            ExplorerKind::TrajOpt => format!("{}-trajopt-h{}", self.agent.critic.as_str(), self.planner.horizon),
        }
    }
}
