//! One deep Q-learner: epsilon-greedy action selection, target computation
//! and the weighted-loss training step. Both the per-attack agents and the
//! decider are instances of this type; they differ only in action arity and
//! input dimension.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::loss::wmse_gradient_entry;
use crate::nn::{wmse_loss, AdamConfig, DenseNetwork, Gradients, Workspace};
use crate::replay::{Experience, ReplayBuffer};
use crate::seeds::derive_seed;

/// Linear per-episode exploration schedule. The value is computed from the
/// episode counter (`max(floor, initial - episodes * decay)`) rather than by
/// repeated subtraction, so it hits the floor exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    initial: f64,
    decay_per_episode: f64,
    floor: f64,
    episodes: u32,
}

impl EpsilonSchedule {
    pub fn new(initial: f64, decay_per_episode: f64, floor: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&initial) || !(0.0..=1.0).contains(&floor) || floor > initial {
            return Err(Error::config(format!(
                "epsilon schedule needs 0 <= floor <= initial <= 1, got {initial}/{floor}"
            )));
        }
        if !(decay_per_episode > 0.0) {
            return Err(Error::config("epsilon decay must be positive"));
        }
        Ok(EpsilonSchedule {
            initial,
            decay_per_episode,
            floor,
            episodes: 0,
        })
    }

    /// Exploration probability after the episodes elapsed so far.
    pub fn value(&self) -> f64 {
        (self.initial - f64::from(self.episodes) * self.decay_per_episode).max(self.floor)
    }

    pub fn advance(&mut self) {
        self.episodes += 1;
    }

    pub fn episodes(&self) -> u32 {
        self.episodes
    }
}

/// Scratch vectors reused across training steps.
#[derive(Debug, Clone, Default)]
struct TrainScratch {
    preds: Vec<f32>,
    targets: Vec<f32>,
    weights: Vec<f32>,
    out_grad: Vec<f32>,
}

/// A single Q-learner with its own network, replay memory and rng stream.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    network: DenseNetwork<f32>,
    buffer: ReplayBuffer,
    action_arity: usize,
    gamma: f64,
    schedule: EpsilonSchedule,
    adam: AdamConfig,
    rng: ChaCha8Rng,
    seed: u64,
    ws: Workspace<f32>,
    grads: Gradients<f32>,
    scratch: TrainScratch,
}

impl DqnAgent {
    /// Builds an agent with a freshly initialized network
    /// `[input_dim, hidden..., action_arity]`.
    pub fn new(
        input_dim: usize,
        hidden_dims: &[usize],
        action_arity: usize,
        gamma: f64,
        schedule: EpsilonSchedule,
        adam: AdamConfig,
        buffer_capacity: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut layer_dims = Vec::with_capacity(hidden_dims.len() + 2);
        layer_dims.push(input_dim);
        layer_dims.extend_from_slice(hidden_dims);
        layer_dims.push(action_arity);
        let network = DenseNetwork::init(&layer_dims, derive_seed(seed, 0))?;
        Self::restore(network, gamma, schedule, adam, buffer_capacity, seed)
    }

    /// Rebuilds an agent around an existing network (load path and tests).
    /// The replay buffer starts empty; action/sampling rng streams restart
    /// from the stored seed.
    pub fn restore(
        network: DenseNetwork<f32>,
        gamma: f64,
        schedule: EpsilonSchedule,
        adam: AdamConfig,
        buffer_capacity: usize,
        seed: u64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::config(format!("gamma must lie in [0, 1], got {gamma}")));
        }
        adam.validate()?;
        let action_arity = network.output_dim();
        let buffer = ReplayBuffer::new(buffer_capacity, derive_seed(seed, 1))?;
        let rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2));
        let ws = network.workspace();
        let grads = network.zeroed_gradients();
        Ok(DqnAgent {
            network,
            buffer,
            action_arity,
            gamma,
            schedule,
            adam,
            rng,
            seed,
            ws,
            grads,
            scratch: TrainScratch::default(),
        })
    }

    pub fn network(&self) -> &DenseNetwork<f32> {
        &self.network
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn buffer_mut(&mut self) -> &mut ReplayBuffer {
        &mut self.buffer
    }

    pub fn action_arity(&self) -> usize {
        self.action_arity
    }

    pub fn input_dim(&self) -> usize {
        self.network.input_dim()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn adam_config(&self) -> &AdamConfig {
        &self.adam
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn epsilon(&self) -> f64 {
        self.schedule.value()
    }

    pub fn schedule(&self) -> &EpsilonSchedule {
        &self.schedule
    }

    /// Pure greedy Q-values for a state; no exploration, no mutation.
    pub fn q_values(&self, state: &[f32]) -> Result<Vec<f32>> {
        self.network.forward(state)
    }

    /// Epsilon-greedy: a uniform random action with probability epsilon,
    /// otherwise the argmax Q action (lowest index wins ties).
    pub fn select_action(&mut self, state: &[f32]) -> Result<usize> {
        if state.len() != self.network.input_dim() {
            return Err(Error::ShapeMismatch {
                what: "agent state",
                expected: self.network.input_dim(),
                actual: state.len(),
            });
        }
        let explore: f64 = self.rng.gen();
        if explore < self.schedule.value() {
            return Ok(self.rng.gen_range(0..self.action_arity));
        }
        self.network.forward_into(state, &mut self.ws);
        Ok(argmax(self.ws.output()))
    }

    /// `reward + gamma * max_a Q(next_state, a)` using the live network.
    pub fn compute_target(&self, reward: f64, next_state: &[f32]) -> Result<f64> {
        let q = self.network.forward(next_state)?;
        let max = q.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        Ok(reward + self.gamma * f64::from(max))
    }

    /// One weighted-loss update over a batch of transitions: for each
    /// transition the regression target equals the current Q-values except
    /// at the taken action, so only that entry carries gradient. Returns the
    /// batch WMSE before the update. Neither the batch nor the replay buffer
    /// is mutated.
    pub fn train_step(&mut self, batch: &[Experience]) -> Result<f32> {
        if batch.is_empty() {
            return Err(Error::validation("training batch is empty"));
        }
        let refs: Vec<&Experience> = batch.iter().collect();
        let Self {
            network,
            ws,
            grads,
            scratch,
            gamma,
            adam,
            action_arity,
            ..
        } = self;
        train_batch_core(network, ws, grads, scratch, *gamma, adam, *action_arity, &refs)
    }

    /// Samples a minibatch from the replay buffer (clamped to its size) and
    /// runs one [`DqnAgent::train_step`] on it without copying experiences.
    pub fn train_from_replay(&mut self, minibatch_size: usize) -> Result<f32> {
        let idx = self.buffer.sample_indices(minibatch_size)?;
        let Self {
            network,
            buffer,
            ws,
            grads,
            scratch,
            gamma,
            adam,
            action_arity,
            ..
        } = self;
        let refs: Vec<&Experience> = idx.iter().map(|&i| buffer.entry(i)).collect();
        train_batch_core(network, ws, grads, scratch, *gamma, adam, *action_arity, &refs)
    }

    /// Advances the per-episode epsilon schedule.
    pub fn decay_epsilon(&mut self) {
        self.schedule.advance();
    }

    /// Hex SHA-256 of the network weights and biases.
    pub fn weight_digest(&self) -> String {
        hex(&self.network.weight_digest())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[allow(clippy::too_many_arguments)]
fn train_batch_core(
    network: &mut DenseNetwork<f32>,
    ws: &mut Workspace<f32>,
    grads: &mut Gradients<f32>,
    scratch: &mut TrainScratch,
    gamma: f64,
    adam: &AdamConfig,
    action_arity: usize,
    batch: &[&Experience],
) -> Result<f32> {
    let n = batch.len();
    let input_dim = network.input_dim();
    for e in batch {
        if e.state.len() != input_dim || e.next_state.len() != input_dim {
            return Err(Error::ShapeMismatch {
                what: "experience state",
                expected: input_dim,
                actual: e.state.len(),
            });
        }
        if e.action >= action_arity {
            return Err(Error::validation(format!(
                "experience action {} out of range 0..{action_arity}",
                e.action
            )));
        }
    }

    scratch.preds.clear();
    scratch.targets.clear();
    scratch.weights.clear();
    scratch.out_grad.resize(action_arity, 0.0);
    grads.zero();

    for e in batch {
        // Target first, so the workspace trace left behind is the one for
        // `state`, which the backward pass consumes.
        network.forward_into(&e.next_state, ws);
        let max_next = ws
            .output()
            .iter()
            .copied()
            .fold(f32::NEG_INFINITY, f32::max);
        let target = (f64::from(e.reward) + gamma * f64::from(max_next)) as f32;

        network.forward_into(&e.state, ws);
        let pred = ws.output()[e.action];
        scratch.preds.push(pred);
        scratch.targets.push(target);
        scratch.weights.push(e.sample_weight);

        let g = wmse_gradient_entry(pred, target, e.sample_weight, n);
        if g != 0.0 {
            scratch.out_grad[e.action] = g;
            network.backprop_into(&e.state, &scratch.out_grad, ws, grads);
            scratch.out_grad[e.action] = 0.0;
        }
    }

    let loss = wmse_loss(&scratch.preds, &scratch.targets, &scratch.weights)?;
    network.adam_step(grads, adam)?;
    Ok(loss)
}
