//! Bounded FIFO experience-replay memory with weighted transitions and
//! uniform minibatch sampling.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One stored transition. `sample_weight` is the per-sample loss weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub state: Vec<f32>,
    pub action: usize,
    pub reward: f32,
    pub next_state: Vec<f32>,
    pub sample_weight: f32,
}

/// Ring buffer of experiences: insertion beyond capacity evicts the oldest.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: VecDeque<Experience>,
    rng: ChaCha8Rng,
    state_dim: Option<usize>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::validation("replay capacity must be positive"));
        }
        Ok(ReplayBuffer {
            capacity,
            entries: VecDeque::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            state_dim: None,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn entry(&self, idx: usize) -> &Experience {
        &self.entries[idx]
    }

    /// Drops all stored transitions (used when the state dimension changes).
    pub fn clear(&mut self) {
        self.entries.clear();
        self.state_dim = None;
    }

    /// Appends a transition, evicting the oldest one when full.
    pub fn store(&mut self, e: Experience) -> Result<()> {
        if e.state.len() != e.next_state.len() {
            return Err(Error::ShapeMismatch {
                what: "experience next_state",
                expected: e.state.len(),
                actual: e.next_state.len(),
            });
        }
        match self.state_dim {
            None => self.state_dim = Some(e.state.len()),
            Some(d) if d != e.state.len() => {
                return Err(Error::ShapeMismatch {
                    what: "experience state",
                    expected: d,
                    actual: e.state.len(),
                });
            }
            _ => {}
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(e);
        Ok(())
    }

    /// Uniform sample of `min(batch_size, len)` distinct buffer slots.
    pub fn sample_indices(&mut self, batch_size: usize) -> Result<Vec<usize>> {
        if self.entries.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let amount = batch_size.min(self.entries.len());
        Ok(rand::seq::index::sample(&mut self.rng, self.entries.len(), amount).into_vec())
    }

    /// Uniform minibatch without replacement; clamped to the buffer size.
    pub fn sample_minibatch(&mut self, batch_size: usize) -> Result<Vec<Experience>> {
        let idx = self.sample_indices(batch_size)?;
        Ok(idx.into_iter().map(|i| self.entries[i].clone()).collect())
    }
}
