//! The two-level ensemble: N per-attack L1 agents plus one decider agent.
//!
//! Training runs episode by episode. Within an episode every L1 agent sweeps
//! the whole training set (epsilon-greedy action, cost-sensitive reward,
//! weighted transition into its replay memory, one minibatch update per
//! sample). After all sweeps, each sample's greedy Q-triples from every
//! agent are concatenated into the decider state, and the decider runs one
//! sweep of its own over those states. Epsilon decays once per episode for
//! every agent.
//!
//! Decider states are assembled from post-sweep Q-values, so the result does
//! not depend on the order (or parallelism) of the agent sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{argmax, DqnAgent, EpsilonSchedule};
use crate::config::RunConfig;
use crate::data::{Dataset, ZScoreParams};
use crate::error::{Error, Result};
use crate::labels::LabelRegistry;
use crate::replay::Experience;
use crate::reward::{decider_sample_weights, l1_reward, L1Category};
use crate::seeds::derive_seed;

// Seed stream tags, one namespace per concern.
const STREAM_L1_AGENT: u64 = 0x1000;
const STREAM_DECIDER: u64 = 0x2000;
const STREAM_SHUFFLE: u64 = 0x3000;
const STREAM_ADAPT_SPLIT: u64 = 0x5000;
const STREAM_DECIDER_REBUILD: u64 = 0x6000;

/// One per-episode, per-agent training log entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub episode: u32,
    pub agent: String,
    pub mean_loss: f64,
    pub mean_reward: f64,
    pub epsilon: f64,
}

/// Append-only training log; one line per agent per episode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub entries: Vec<LogEntry>,
}

impl TrainingLog {
    pub fn render_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!(
                "episode={} agent={} mean_loss={:.6} mean_reward={:.4} epsilon={:.4}\n",
                e.episode, e.agent, e.mean_loss, e.mean_reward, e.epsilon
            ));
        }
        out
    }
}

/// Outcome of an adaptation run.
#[derive(Debug)]
pub struct AdaptReport {
    /// Labels that were new to the registry and got fresh agents.
    pub new_labels: Vec<String>,
    /// The held-out 20% of the new data, for testing.
    pub holdout: Dataset,
    /// Agents whose parameters were retrained ("decider" included).
    pub trained: Vec<String>,
    pub log: TrainingLog,
}

/// Row-major matrix of f32 states.
struct StateMatrix {
    data: Vec<f32>,
    dim: usize,
}

impl StateMatrix {
    fn from_dataset(ds: &Dataset) -> Self {
        let dim = ds.feature_dim();
        let mut data = Vec::with_capacity(dim * ds.len());
        for r in ds.records() {
            data.extend(r.features.iter().map(|&x| x as f32));
        }
        StateMatrix { data, dim }
    }

    fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// The deployable model: label registry, per-attack agents, decider, and
/// the fitted normalization.
#[derive(Debug, Clone)]
pub struct MarlEnsemble {
    registry: LabelRegistry,
    l1_agents: Vec<DqnAgent>,
    decider: DqnAgent,
    feature_dim: usize,
    normalization: ZScoreParams,
    config: RunConfig,
}

impl MarlEnsemble {
    /// Builds an untrained ensemble: one arity-3 agent per attack label in
    /// registry order, and a decider with input `3 * N` and arity `N + 1`.
    pub fn new(
        registry: LabelRegistry,
        feature_dim: usize,
        normalization: ZScoreParams,
        config: RunConfig,
    ) -> Result<Self> {
        config.validate()?;
        if registry.num_attacks() == 0 {
            return Err(Error::validation(
                "registry needs at least one attack label",
            ));
        }
        if feature_dim == 0 {
            return Err(Error::validation("feature_dim must be positive"));
        }
        if normalization.means.len() != feature_dim {
            return Err(Error::ShapeMismatch {
                what: "normalization parameters",
                expected: feature_dim,
                actual: normalization.means.len(),
            });
        }
        let schedule =
            EpsilonSchedule::new(config.epsilon_initial, config.epsilon_decay, 0.0)?;
        let adam = config.adam_config();
        let l1_agents = (0..registry.num_attacks())
            .map(|i| {
                DqnAgent::new(
                    feature_dim,
                    &config.hidden_neurons,
                    L1Category::ARITY,
                    config.gamma,
                    schedule,
                    adam,
                    config.replay_buffer_size,
                    derive_seed(config.seed, STREAM_L1_AGENT + i as u64),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let decider = DqnAgent::new(
            L1Category::ARITY * registry.num_attacks(),
            &config.hidden_neurons,
            registry.decider_arity(),
            config.gamma,
            schedule,
            adam,
            config.replay_buffer_size,
            derive_seed(config.seed, STREAM_DECIDER),
        )?;
        Self::from_parts(registry, l1_agents, decider, feature_dim, normalization, config)
    }

    /// Builds the ensemble for a training set: one agent per attack label
    /// observed in it (attacks sorted lexicographically).
    pub fn for_dataset(
        train: &Dataset,
        normalization: ZScoreParams,
        config: RunConfig,
    ) -> Result<Self> {
        let labels = train.distinct_labels();
        let registry = LabelRegistry::from_labels(
            labels.iter().map(String::as_str),
            &config.benign_label,
        )?;
        Self::new(registry, train.feature_dim(), normalization, config)
    }

    /// Assembles an ensemble from existing parts, validating shapes.
    pub fn from_parts(
        registry: LabelRegistry,
        l1_agents: Vec<DqnAgent>,
        decider: DqnAgent,
        feature_dim: usize,
        normalization: ZScoreParams,
        config: RunConfig,
    ) -> Result<Self> {
        if l1_agents.len() != registry.num_attacks() {
            return Err(Error::Incompatible(format!(
                "{} agents for {} attack labels",
                l1_agents.len(),
                registry.num_attacks()
            )));
        }
        for (i, a) in l1_agents.iter().enumerate() {
            if a.action_arity() != L1Category::ARITY {
                return Err(Error::Incompatible(format!(
                    "agent {i} has arity {}, expected {}",
                    a.action_arity(),
                    L1Category::ARITY
                )));
            }
            if a.input_dim() != feature_dim {
                return Err(Error::Incompatible(format!(
                    "agent {i} expects {} features, dataset has {feature_dim}",
                    a.input_dim()
                )));
            }
        }
        if decider.input_dim() != L1Category::ARITY * registry.num_attacks() {
            return Err(Error::Incompatible(format!(
                "decider input {} != 3 * {}",
                decider.input_dim(),
                registry.num_attacks()
            )));
        }
        if decider.action_arity() != registry.decider_arity() {
            return Err(Error::Incompatible(format!(
                "decider arity {} != {}",
                decider.action_arity(),
                registry.decider_arity()
            )));
        }
        if normalization.means.len() != feature_dim {
            return Err(Error::Incompatible(
                "normalization dimension != feature_dim".to_string(),
            ));
        }
        Ok(MarlEnsemble {
            registry,
            l1_agents,
            decider,
            feature_dim,
            normalization,
            config,
        })
    }

    pub fn registry(&self) -> &LabelRegistry {
        &self.registry
    }

    pub fn l1_agents(&self) -> &[DqnAgent] {
        &self.l1_agents
    }

    pub fn decider(&self) -> &DqnAgent {
        &self.decider
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn normalization(&self) -> &ZScoreParams {
        &self.normalization
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    /// Hex weight digests: one per attack label plus `"decider"`.
    pub fn weight_digests(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = self
            .registry
            .attacks()
            .iter()
            .zip(&self.l1_agents)
            .map(|(label, agent)| (label.clone(), agent.weight_digest()))
            .collect();
        out.push(("decider".to_string(), self.decider.weight_digest()));
        out
    }

    /// Concatenation of every agent's greedy Q-triple for a flow state, in
    /// registry order. Pure.
    pub fn build_decider_state(&self, flow_state: &[f32]) -> Result<Vec<f32>> {
        if flow_state.len() != self.feature_dim {
            return Err(Error::ShapeMismatch {
                what: "flow state",
                expected: self.feature_dim,
                actual: flow_state.len(),
            });
        }
        let mut state = Vec::with_capacity(L1Category::ARITY * self.l1_agents.len());
        for agent in &self.l1_agents {
            let mut q = agent.q_values(flow_state)?;
            if self.config.softmax_decider_state {
                softmax_in_place(&mut q);
            }
            state.extend_from_slice(&q);
        }
        Ok(state)
    }

    /// Greedy end-to-end classification of one (already normalized) flow
    /// state: returns the predicted label and the decider's raw Q-vector.
    pub fn predict(&self, flow_state: &[f32]) -> Result<(String, Vec<f32>)> {
        let ds = self.build_decider_state(flow_state)?;
        let q = self.decider.q_values(&ds)?;
        let action = argmax(&q);
        Ok((self.registry.label_of_action(action)?.to_string(), q))
    }

    /// Applies the stored normalization to a raw feature vector, then
    /// predicts.
    pub fn predict_raw(&self, raw_features: &[f64]) -> Result<(String, Vec<f32>)> {
        let mut state = Vec::new();
        self.normalization.normalize_into(raw_features, &mut state)?;
        self.predict(&state)
    }

    /// Full training (every agent, `config.episodes` episodes).
    pub fn train(&mut self, train: &Dataset) -> Result<TrainingLog> {
        let mask = vec![true; self.l1_agents.len()];
        let episodes = self.config.episodes;
        self.train_inner(train, episodes, &mask)
    }

    /// Episode loop shared by full training and adaptation. Agents whose
    /// mask entry is false are completely skipped (their parameters and rng
    /// streams stay untouched); the decider always trains.
    fn train_inner(
        &mut self,
        train: &Dataset,
        episodes: u32,
        trainee_mask: &[bool],
    ) -> Result<TrainingLog> {
        if train.is_empty() {
            return Err(Error::validation("training set is empty"));
        }
        if train.feature_dim() != self.feature_dim {
            return Err(Error::Incompatible(format!(
                "dataset has {} features, model expects {}",
                train.feature_dim(),
                self.feature_dim
            )));
        }
        let states = StateMatrix::from_dataset(train);
        let label_actions: Vec<usize> = train
            .records()
            .iter()
            .map(|r| self.registry.action_index(&r.label))
            .collect::<Result<Vec<_>>>()?;

        // Decider sample weights from the class frequencies of this set,
        // mapped to action-index order.
        let weight_map = decider_sample_weights(&train.label_counts(), &self.config.reward)?;
        let weights_by_action: Vec<f32> = self
            .registry
            .all_labels()
            .iter()
            .map(|l| weight_map.get(l).copied().unwrap_or(1.0) as f32)
            .collect();

        let n = train.len();
        let n_attacks = self.registry.num_attacks();
        let k_emph = self.config.reward.k;
        let w_agent = self.config.reward.l1_weight_agent_class as f32;
        let w_other = self.config.reward.l1_weight_other as f32;
        let minibatch = self.config.minibatch_size;
        let mut log = TrainingLog::default();

        for episode in 1..=episodes {
            let order = self.sweep_order(n, episode);

            // L1 sweeps; agents are independent, so they may run in
            // parallel without changing any result.
            let attack_names = self.registry.attacks().to_vec();
            let sweep_stats: Vec<Option<(f64, f64)>> = self
                .l1_agents
                .par_iter_mut()
                .enumerate()
                .map(|(j, agent)| -> Result<Option<(f64, f64)>> {
                    if !trainee_mask[j] {
                        return Ok(None);
                    }
                    let mut loss_sum = 0.0f64;
                    let mut reward_sum = 0.0f64;
                    for k in 0..n {
                        let i = order[k];
                        let next = order[if k + 1 < n { k + 1 } else { k }];
                        let state = states.row(i);
                        let action = agent.select_action(state)?;
                        let true_cat = if label_actions[i] == j {
                            L1Category::AgentAttack
                        } else if label_actions[i] == n_attacks {
                            L1Category::Normal
                        } else {
                            L1Category::OtherAttack
                        };
                        let reward =
                            l1_reward(true_cat, L1Category::from_action(action)?, k_emph)?;
                        let weight = if label_actions[i] == j { w_agent } else { w_other };
                        agent.buffer_mut().store(Experience {
                            state: state.to_vec(),
                            action,
                            reward: reward as f32,
                            next_state: states.row(next).to_vec(),
                            sample_weight: weight,
                        })?;
                        loss_sum += f64::from(agent.train_from_replay(minibatch)?);
                        reward_sum += reward;
                    }
                    Ok(Some((loss_sum / n as f64, reward_sum / n as f64)))
                })
                .collect::<Result<Vec<_>>>()?;

            // Post-sweep decider states for every sample, in sweep order.
            let decider_states: Vec<Vec<f32>> = order
                .par_iter()
                .map(|&i| self.build_decider_state(states.row(i)))
                .collect::<Result<Vec<_>>>()?;
            let decider_actions: Vec<usize> =
                order.iter().map(|&i| label_actions[i]).collect();

            let (d_loss, d_reward) = decider_sweep(
                &mut self.decider,
                &decider_states,
                &decider_actions,
                &weights_by_action,
                minibatch,
            )?;

            for ((j, agent), name) in
                self.l1_agents.iter_mut().enumerate().zip(&attack_names)
            {
                if trainee_mask[j] {
                    agent.decay_epsilon();
                }
                if let Some((mean_loss, mean_reward)) = sweep_stats[j] {
                    log.entries.push(LogEntry {
                        episode,
                        agent: name.clone(),
                        mean_loss,
                        mean_reward,
                        epsilon: agent.epsilon(),
                    });
                }
            }
            self.decider.decay_epsilon();
            log.entries.push(LogEntry {
                episode,
                agent: "decider".to_string(),
                mean_loss: d_loss,
                mean_reward: d_reward,
                epsilon: self.decider.epsilon(),
            });
        }
        Ok(log)
    }

    fn sweep_order(&self, n: usize, episode: u32) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        if self.config.shuffle_per_episode {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(
                self.config.seed,
                STREAM_SHUFFLE + u64::from(episode),
            ));
            order.shuffle(&mut rng);
        }
        order
    }

    /// Incremental adaptation: retrains only the agents named in `affected`
    /// (plus the decider) on the previous training set combined with 80% of
    /// `new_data`. Labels not yet in the registry get a fresh agent and the
    /// decider is rebuilt with widened layers, copying surviving weights.
    /// Every unaffected agent is bit-identical afterwards.
    pub fn adapt(
        &mut self,
        prev_train: &Dataset,
        new_data: &Dataset,
        affected: &[String],
        episodes: u32,
    ) -> Result<AdaptReport> {
        if affected.is_empty() {
            return Err(Error::validation("no affected labels given"));
        }
        if new_data.is_empty() {
            return Err(Error::validation("new data is empty"));
        }
        let mut new_labels = Vec::new();
        for label in affected {
            if *label == self.config.benign_label {
                return Err(Error::validation(
                    "the benign class has no level-1 agent to adapt",
                ));
            }
            if !self.registry.contains(label) {
                new_labels.push(label.clone());
            }
        }

        let schedule =
            EpsilonSchedule::new(self.config.epsilon_initial, self.config.epsilon_decay, 0.0)?;
        for label in &new_labels {
            self.registry.push_attack(label.clone())?;
            let idx = self.registry.num_attacks() - 1;
            self.l1_agents.push(DqnAgent::new(
                self.feature_dim,
                &self.config.hidden_neurons,
                L1Category::ARITY,
                self.config.gamma,
                schedule,
                self.config.adam_config(),
                self.config.replay_buffer_size,
                derive_seed(self.config.seed, STREAM_L1_AGENT + idx as u64),
            )?);
        }
        if !new_labels.is_empty() {
            self.rebuild_decider_widened()?;
        }

        let (new_train, holdout) = new_data.split(
            self.config.split_fraction,
            derive_seed(self.config.seed, STREAM_ADAPT_SPLIT),
        )?;
        let combined = prev_train.concat(&new_train)?;

        let mask: Vec<bool> = self
            .registry
            .attacks()
            .iter()
            .map(|a| affected.contains(a))
            .collect();
        let log = self.train_inner(&combined, episodes, &mask)?;

        let mut trained: Vec<String> = self
            .registry
            .attacks()
            .iter()
            .zip(&mask)
            .filter_map(|(l, &m)| m.then(|| l.clone()))
            .collect();
        trained.push("decider".to_string());
        Ok(AdaptReport {
            new_labels,
            holdout,
            trained,
            log,
        })
    }

    /// Replaces the decider with a widened network (input `3 * N_new`,
    /// arity `N_new + 1`). First-layer columns for existing agents and all
    /// hidden layers are copied; the benign output row moves to the new last
    /// slot; rows/columns for new attacks keep their random initialization.
    /// The optimizer state starts fresh and the replay memory is cleared
    /// (its stored states have the old width).
    fn rebuild_decider_widened(&mut self) -> Result<()> {
        let n_new = self.registry.num_attacks();
        let new_in = L1Category::ARITY * n_new;
        let new_out = n_new + 1;
        let old = self.decider.network();
        let old_in = old.input_dim();
        let old_out = old.output_dim();

        let mut dims = Vec::with_capacity(self.config.hidden_neurons.len() + 2);
        dims.push(new_in);
        dims.extend_from_slice(&self.config.hidden_neurons);
        dims.push(new_out);
        let mut net = crate::nn::DenseNetwork::<f32>::init(
            &dims,
            derive_seed(self.config.seed, STREAM_DECIDER_REBUILD + n_new as u64),
        )?;

        let n_layers = dims.len() - 1;
        // First layer: copy the leading columns (existing agents' triples).
        for row in 0..dims[1] {
            for col in 0..old_in {
                net.set_weight(0, row, col, old.weight(0, row, col));
            }
            net.set_bias(0, row, old.bias(0, row));
        }
        // Interior layers have unchanged shapes: copy verbatim.
        for l in 1..n_layers - 1 {
            for row in 0..dims[l + 1] {
                for col in 0..dims[l] {
                    net.set_weight(l, row, col, old.weight(l, row, col));
                }
                net.set_bias(l, row, old.bias(l, row));
            }
        }
        // Output layer: old attack rows keep their indices; the benign row
        // moves from old_out-1 to new_out-1.
        let last = n_layers - 1;
        let hidden = dims[last];
        for (new_row, old_row) in (0..old_out - 1)
            .map(|r| (r, r))
            .chain([(new_out - 1, old_out - 1)])
        {
            for col in 0..hidden {
                net.set_weight(last, new_row, col, old.weight(last, old_row, col));
            }
            net.set_bias(last, new_row, old.bias(last, old_row));
        }

        self.decider = DqnAgent::restore(
            net,
            self.config.gamma,
            *self.decider.schedule(),
            *self.decider.adam_config(),
            self.config.replay_buffer_size,
            derive_seed(self.config.seed, STREAM_DECIDER_REBUILD + n_new as u64 + 1),
        )?;
        Ok(())
    }
}

/// One decider sweep over assembled states (the inner loop of the
/// decision-maker training): epsilon-greedy action, +-1 reward, weighted
/// transition, one minibatch update per sample. Returns (mean loss, mean
/// reward).
pub fn decider_sweep(
    decider: &mut DqnAgent,
    states: &[Vec<f32>],
    label_actions: &[usize],
    weights_by_action: &[f32],
    minibatch: usize,
) -> Result<(f64, f64)> {
    if states.is_empty() {
        return Err(Error::validation("decider sweep needs at least one state"));
    }
    if states.len() != label_actions.len() {
        return Err(Error::ShapeMismatch {
            what: "decider labels",
            expected: states.len(),
            actual: label_actions.len(),
        });
    }
    let n = states.len();
    let mut loss_sum = 0.0f64;
    let mut reward_sum = 0.0f64;
    for k in 0..n {
        let state = &states[k];
        if state.len() != decider.input_dim() {
            return Err(Error::ShapeMismatch {
                what: "decider state",
                expected: decider.input_dim(),
                actual: state.len(),
            });
        }
        let action = decider.select_action(state)?;
        let reward = if action == label_actions[k] { 1.0 } else { -1.0 };
        let weight = weights_by_action
            .get(label_actions[k])
            .copied()
            .ok_or_else(|| {
                Error::validation(format!("label action {} has no weight", label_actions[k]))
            })?;
        let next = &states[if k + 1 < n { k + 1 } else { k }];
        decider.buffer_mut().store(Experience {
            state: state.clone(),
            action,
            reward: reward as f32,
            next_state: next.clone(),
            sample_weight: weight,
        })?;
        loss_sum += f64::from(decider.train_from_replay(minibatch)?);
        reward_sum += reward;
    }
    Ok((loss_sum / n as f64, reward_sum / n as f64))
}

fn softmax_in_place(q: &mut [f32]) {
    let max = q.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0f32;
    for v in q.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in q.iter_mut() {
        *v /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, AdamConfig, DenseNetwork};

    fn unit_norm(dim: usize) -> ZScoreParams {
        ZScoreParams {
            means: vec![0.0; dim],
            stds: vec![1.0; dim],
        }
    }

    fn identity_l1_agent(dim: usize) -> DqnAgent {
        let mut w = vec![0.0f32; 3 * dim];
        for i in 0..3.min(dim) {
            w[i * dim + i] = 1.0;
        }
        let net = DenseNetwork::with_parameters(
            &[dim, 3],
            vec![Activation::Linear],
            vec![w],
            vec![vec![0.0; 3]],
        )
        .unwrap();
        DqnAgent::restore(
            net,
            0.0,
            EpsilonSchedule::new(0.0, 0.01, 0.0).unwrap(),
            AdamConfig::default(),
            8,
            1,
        )
        .unwrap()
    }

    fn toy_config() -> RunConfig {
        RunConfig {
            hidden_neurons: vec![8],
            replay_buffer_size: 64,
            minibatch_size: 8,
            episodes: 2,
            benign_downsample_target: 0,
            ..RunConfig::default()
        }
    }

    fn toy_ensemble(attacks: &[&str], feature_dim: usize) -> MarlEnsemble {
        let registry = LabelRegistry::new(
            attacks.iter().map(|s| s.to_string()).collect(),
            "BENIGN",
        )
        .unwrap();
        MarlEnsemble::new(registry, feature_dim, unit_norm(feature_dim), toy_config()).unwrap()
    }

    fn ensemble_with_identity_agents(attacks: &[&str], dim: usize) -> MarlEnsemble {
        let registry = LabelRegistry::new(
            attacks.iter().map(|s| s.to_string()).collect(),
            "BENIGN",
        )
        .unwrap();
        let agents: Vec<DqnAgent> = attacks.iter().map(|_| identity_l1_agent(dim)).collect();
        let decider = DqnAgent::new(
            3 * attacks.len(),
            &[8],
            attacks.len() + 1,
            0.0,
            EpsilonSchedule::new(0.0, 0.01, 0.0).unwrap(),
            AdamConfig::default(),
            8,
            2,
        )
        .unwrap();
        MarlEnsemble::from_parts(
            registry,
            agents,
            decider,
            dim,
            unit_norm(dim),
            toy_config(),
        )
        .unwrap()
    }

    #[test]
    fn identity_agents_echo_features_blockwise() {
        let ens = ensemble_with_identity_agents(&["X", "Y"], 3);
        let state = ens.build_decider_state(&[0.5, -1.0, 2.0]).unwrap();
        assert_eq!(state, vec![0.5, -1.0, 2.0, 0.5, -1.0, 2.0]);
    }

    #[test]
    fn decider_state_length_is_three_per_agent() {
        let attacks: Vec<String> = (0..15).map(|i| format!("atk{i:02}")).collect();
        let refs: Vec<&str> = attacks.iter().map(String::as_str).collect();
        let mut cfg = toy_config();
        cfg.hidden_neurons = vec![4];
        let registry = LabelRegistry::new(attacks.clone(), "BENIGN").unwrap();
        let ens = MarlEnsemble::new(registry, 5, unit_norm(5), cfg).unwrap();
        let state = ens.build_decider_state(&[0.0; 5]).unwrap();
        assert_eq!(state.len(), 45);
        assert_eq!(refs.len(), 15);
        assert_eq!(ens.decider().action_arity(), 16);
    }

    #[test]
    fn permuting_the_registry_permutes_triples_blockwise() {
        let dim = 3;
        let a = identity_l1_agent(dim);
        let mut b = identity_l1_agent(dim);
        // Make B distinguishable: double its first-row weights.
        let mut net = b.network().clone();
        for c in 0..dim {
            net.set_weight(0, 0, c, 2.0 * net.weight(0, 0, c));
        }
        b = DqnAgent::restore(
            net,
            0.0,
            EpsilonSchedule::new(0.0, 0.01, 0.0).unwrap(),
            AdamConfig::default(),
            8,
            1,
        )
        .unwrap();

        let make = |order: [(&str, &DqnAgent); 2]| {
            let registry = LabelRegistry::new(
                order.iter().map(|(l, _)| l.to_string()).collect(),
                "BENIGN",
            )
            .unwrap();
            let decider = DqnAgent::new(
                6,
                &[4],
                3,
                0.0,
                EpsilonSchedule::new(0.0, 0.01, 0.0).unwrap(),
                AdamConfig::default(),
                8,
                2,
            )
            .unwrap();
            MarlEnsemble::from_parts(
                registry,
                order.iter().map(|(_, a)| (*a).clone()).collect(),
                decider,
                dim,
                unit_norm(dim),
                toy_config(),
            )
            .unwrap()
        };
        let xy = make([("X", &a), ("Y", &b)]);
        let yx = make([("Y", &b), ("X", &a)]);
        let s = [0.25f32, -0.75, 1.5];
        let state_xy = xy.build_decider_state(&s).unwrap();
        let state_yx = yx.build_decider_state(&s).unwrap();
        assert_eq!(&state_xy[0..3], &state_yx[3..6]);
        assert_eq!(&state_xy[3..6], &state_yx[0..3]);
    }

    #[test]
    fn forced_decider_weights_select_the_expected_label() {
        let dim = 3;
        let registry =
            LabelRegistry::new(vec!["X".to_string(), "Y".to_string()], "BENIGN").unwrap();
        let agents = vec![identity_l1_agent(dim), identity_l1_agent(dim)];
        // Decider: zero weights, bias forces action 1 ("Y") to win.
        let mut biases = vec![vec![0.0f32; 3]];
        biases[0][1] = 5.0;
        let net = DenseNetwork::with_parameters(
            &[6, 3],
            vec![Activation::Linear],
            vec![vec![0.0f32; 18]],
            biases,
        )
        .unwrap();
        let decider = DqnAgent::restore(
            net,
            0.0,
            EpsilonSchedule::new(0.0, 0.01, 0.0).unwrap(),
            AdamConfig::default(),
            8,
            3,
        )
        .unwrap();
        let ens = MarlEnsemble::from_parts(
            registry,
            agents,
            decider,
            dim,
            unit_norm(dim),
            toy_config(),
        )
        .unwrap();
        let (label, q) = ens.predict(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(label, "Y");
        assert_eq!(q.len(), 3);
    }

    #[test]
    fn prediction_is_deterministic() {
        let ens = toy_ensemble(&["A", "B"], 4);
        let s = [0.1f32, -0.2, 0.3, -0.4];
        let (l1, q1) = ens.predict(&s).unwrap();
        let (l2, q2) = ens.predict(&s).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(q1, q2);
    }

    #[test]
    fn softmax_flag_normalizes_each_triple() {
        let mut ens = ensemble_with_identity_agents(&["X", "Y"], 3);
        ens.config.softmax_decider_state = true;
        let state = ens.build_decider_state(&[1.0, 2.0, 3.0]).unwrap();
        let sum0: f32 = state[0..3].iter().sum();
        let sum1: f32 = state[3..6].iter().sum();
        assert!((sum0 - 1.0).abs() < 1e-6);
        assert!((sum1 - 1.0).abs() < 1e-6);
        assert!(state.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn from_parts_rejects_shape_mismatches() {
        let registry =
            LabelRegistry::new(vec!["X".to_string(), "Y".to_string()], "BENIGN").unwrap();
        let agents = vec![identity_l1_agent(3)]; // one agent, two attacks
        let decider = DqnAgent::new(
            6,
            &[4],
            3,
            0.0,
            EpsilonSchedule::new(0.0, 0.01, 0.0).unwrap(),
            AdamConfig::default(),
            8,
            2,
        )
        .unwrap();
        assert!(MarlEnsemble::from_parts(
            registry,
            agents,
            decider,
            3,
            unit_norm(3),
            toy_config()
        )
        .is_err());
    }

    #[test]
    fn decider_sweep_perfect_decider_gets_all_plus_one() {
        // One attack: decider input 3, arity 2. States are one-hot by
        // class; a hand-built net maps them to the right action.
        let net = DenseNetwork::with_parameters(
            &[3, 2],
            vec![Activation::Linear],
            vec![vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0]],
            vec![vec![0.0, 0.0]],
        )
        .unwrap();
        let mut decider = DqnAgent::restore(
            net,
            0.0,
            EpsilonSchedule::new(0.0, 0.01, 0.0).unwrap(),
            AdamConfig::default(),
            64,
            5,
        )
        .unwrap();
        let states = vec![
            vec![1.0f32, 0.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0],
        ];
        let labels = vec![0usize, 1, 0];
        let (_, mean_reward) =
            decider_sweep(&mut decider, &states, &labels, &[1.0, 1.0], 4).unwrap();
        assert_eq!(mean_reward, 1.0);
    }

    #[test]
    fn decider_sweep_validates_inputs() {
        let mut ens = toy_ensemble(&["A"], 2);
        let wrong = vec![vec![0.0f32; 5]];
        assert!(decider_sweep(&mut ens.decider, &wrong, &[0], &[1.0, 1.0], 4).is_err());
        let empty: Vec<Vec<f32>> = Vec::new();
        assert!(decider_sweep(&mut ens.decider, &empty, &[], &[1.0, 1.0], 4).is_err());
    }

    #[test]
    fn zero_episodes_leave_the_ensemble_at_initialization() {
        let mut ens = toy_ensemble(&["A", "B"], 3);
        ens.config.episodes = 0;
        let before = ens.weight_digests();
        let ds = Dataset::new(
            (0..3).map(|i| format!("f{i}")).collect(),
            vec![
                crate::data::FlowRecord {
                    features: vec![0.0, 0.0, 0.0],
                    label: "A".to_string(),
                },
                crate::data::FlowRecord {
                    features: vec![1.0, 1.0, 1.0],
                    label: "BENIGN".to_string(),
                },
            ],
        )
        .unwrap();
        let log = ens.train(&ds).unwrap();
        assert!(log.entries.is_empty());
        assert_eq!(ens.weight_digests(), before);
    }

    #[test]
    fn training_rejects_bad_datasets() {
        let mut ens = toy_ensemble(&["A"], 3);
        let empty = Dataset::new((0..3).map(|i| format!("f{i}")).collect(), vec![]).unwrap();
        assert!(ens.train(&empty).is_err());
        let alien = Dataset::new(
            (0..3).map(|i| format!("f{i}")).collect(),
            vec![crate::data::FlowRecord {
                features: vec![0.0; 3],
                label: "Mystery".to_string(),
            }],
        )
        .unwrap();
        assert!(ens.train(&alien).is_err());
    }
}
