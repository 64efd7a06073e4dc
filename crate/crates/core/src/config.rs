//! Run configuration: training hyperparameters, reward shaping, data
//! handling and reproducibility controls, with validation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::AdamConfig;
use crate::reward::RewardConfig;

/// Everything a training/evaluation run needs. Serialized as the config
/// file and echoed into every output artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    // Core DQN hyperparameters.
    pub replay_buffer_size: usize,
    pub minibatch_size: usize,
    pub hidden_neurons: Vec<usize>,
    pub learning_rate: f64,
    pub gamma: f64,
    pub epsilon_initial: f64,
    pub epsilon_decay: f64,
    pub episodes: u32,

    // Reward shaping and sample weights.
    pub reward: RewardConfig,

    // Data handling.
    pub benign_label: String,
    pub split_fraction: f64,
    /// Benign records to keep after downsampling; 0 disables.
    pub benign_downsample_target: usize,
    /// Optional label regrouping applied during preprocessing.
    pub label_grouping: BTreeMap<String, String>,

    // Reproducibility and execution.
    pub seed: u64,
    /// Worker threads for per-agent parallelism; 0 picks the rayon default.
    pub threads: usize,
    /// Re-shuffle the sweep order each episode (off keeps dataset order).
    pub shuffle_per_episode: bool,
    /// Softmax-normalize each agent's Q-triple in the decider state.
    pub softmax_decider_state: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            replay_buffer_size: 10_000_000,
            minibatch_size: 1_000_000,
            hidden_neurons: vec![128, 128],
            learning_rate: 0.01,
            gamma: 0.01,
            epsilon_initial: 1.0,
            epsilon_decay: 0.01,
            episodes: 300,
            reward: RewardConfig::default(),
            benign_label: "BENIGN".to_string(),
            split_fraction: 0.8,
            benign_downsample_target: 700_000,
            label_grouping: BTreeMap::new(),
            seed: 1,
            threads: 0,
            shuffle_per_episode: false,
            softmax_decider_state: false,
        }
    }
}

impl RunConfig {
    /// A configuration sized for quick runs on a workstation: smaller
    /// network and replay memory, per-step minibatches. Learning rate,
    /// gamma, epsilon schedule and reward shaping keep their defaults.
    pub fn desk_profile() -> Self {
        RunConfig {
            replay_buffer_size: 65_536,
            minibatch_size: 32,
            hidden_neurons: vec![32, 32],
            benign_downsample_target: 0,
            ..RunConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replay_buffer_size == 0 {
            return Err(Error::config("replay_buffer_size must be positive"));
        }
        if self.minibatch_size == 0 {
            return Err(Error::config("minibatch_size must be positive"));
        }
        if self.hidden_neurons.iter().any(|&n| n == 0) {
            return Err(Error::config("hidden layer sizes must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate must be > 0"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config(format!(
                "gamma must lie in [0, 1), got {}",
                self.gamma
            )));
        }
        if !(self.epsilon_decay > 0.0) {
            return Err(Error::config("epsilon_decay must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.epsilon_initial) {
            return Err(Error::config("epsilon_initial must lie in [0, 1]"));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::config("split_fraction must lie in (0, 1)"));
        }
        self.reward.validate()?;
        self.adam_config().validate()
    }

    pub fn adam_config(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        }
    }
}
