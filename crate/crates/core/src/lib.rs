//! Two-level multi-agent deep-Q-network intrusion detection.
//!
//! The detection level is a set of independent per-attack Q-learners over
//! flow features; a second-level decider agent consumes their concatenated
//! Q-value triples and emits the final class. Training uses a weighted
//! mean-square loss with cost-sensitive rewards and sample weights so that
//! minority attack classes stay detectable.

pub mod agent;
pub mod config;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod labels;
pub mod nn;
pub mod persist;
pub mod replay;
pub mod reward;
mod seeds;

pub use agent::{DqnAgent, EpsilonSchedule};
pub use config::RunConfig;
pub use data::{Dataset, FlowRecord, ZScoreParams};
pub use ensemble::{AdaptReport, MarlEnsemble, TrainingLog};
pub use error::{Error, Result};
pub use eval::{ConfusionMatrix, EvaluationReport};
pub use labels::LabelRegistry;
pub use nn::{Activation, AdamConfig, DenseNetwork};
pub use replay::{Experience, ReplayBuffer};
pub use reward::{L1Category, RewardConfig};
