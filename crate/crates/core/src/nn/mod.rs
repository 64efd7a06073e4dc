//! From-scratch dense Q-network: forward pass, reverse-mode gradients and
//! Adam updates over a fixed feed-forward topology (ReLU hidden layers,
//! linear output).
//!
//! Training runs in `f32`; gradient verification instantiates the same code
//! in `f64` through the [`Scalar`] trait.

pub(crate) mod loss;

pub use loss::{wmse_gradient, wmse_loss};

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Floating-point element type of a network.
pub trait Scalar:
    Copy
    + PartialOrd
    + Debug
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + 'static
{
    const ZERO: Self;
    const ONE: Self;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn sqrt(self) -> Self;
    fn is_finite_val(self) -> bool;
    fn write_le_bytes(self, out: &mut Vec<u8>);
}

impl Scalar for f32 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;

    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn sqrt(self) -> Self {
        f32::sqrt(self)
    }
    fn is_finite_val(self) -> bool {
        self.is_finite()
    }
    fn write_le_bytes(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
}

impl Scalar for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;

    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn is_finite_val(self) -> bool {
        self.is_finite()
    }
    fn write_le_bytes(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
}

/// Element-wise activation applied after a layer's affine transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    ReLU,
    Linear,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::ReLU => {
                if z > T::ZERO {
                    z
                } else {
                    T::ZERO
                }
            }
            Activation::Linear => z,
        }
    }

    /// Derivative expressed in terms of the post-activation output.
    #[inline]
    fn grad_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::ReLU => {
                if y > T::ZERO {
                    T::ONE
                } else {
                    T::ZERO
                }
            }
            Activation::Linear => T::ONE,
        }
    }
}

/// Adam hyperparameters. The paper-facing knob is the learning rate; the
/// moment constants are the conventional defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon_stabilizer: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon_stabilizer: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate must be > 0"));
        }
        if !(0.0 < self.beta1 && self.beta1 < self.beta2 && self.beta2 < 1.0) {
            return Err(Error::config("adam betas must satisfy 0 < beta1 < beta2 < 1"));
        }
        if !(self.epsilon_stabilizer > 0.0) {
            return Err(Error::config("epsilon_stabilizer must be > 0"));
        }
        Ok(())
    }
}

/// First/second moment accumulators, one entry per parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AdamState<T: Scalar> {
    m_weights: Vec<Vec<T>>,
    v_weights: Vec<Vec<T>>,
    m_biases: Vec<Vec<T>>,
    v_biases: Vec<Vec<T>>,
    step: u64,
}

impl<T: Scalar> AdamState<T> {
    fn zeroed(weights: &[Vec<T>], biases: &[Vec<T>]) -> Self {
        AdamState {
            m_weights: weights.iter().map(|w| vec![T::ZERO; w.len()]).collect(),
            v_weights: weights.iter().map(|w| vec![T::ZERO; w.len()]).collect(),
            m_biases: biases.iter().map(|b| vec![T::ZERO; b.len()]).collect(),
            v_biases: biases.iter().map(|b| vec![T::ZERO; b.len()]).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// Per-parameter gradients, shape-matched to a network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T: Scalar = f32> {
    pub weights: Vec<Vec<T>>,
    pub biases: Vec<Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zero(&mut self) {
        for g in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            g.fill(T::ZERO);
        }
    }
}

/// Reusable intermediate buffers for the forward/backward passes.
#[derive(Debug, Clone)]
pub struct Workspace<T: Scalar = f32> {
    /// Post-activation output of each layer.
    acts: Vec<Vec<T>>,
    delta: Vec<T>,
    delta_prev: Vec<T>,
}

/// Feed-forward Q-network with per-parameter Adam state.
///
/// Layer `l` maps `layer_dims[l]` inputs to `layer_dims[l+1]` outputs through
/// a row-major weight matrix of shape `(layer_dims[l+1], layer_dims[l])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DenseNetwork<T: Scalar = f32> {
    layer_dims: Vec<usize>,
    activations: Vec<Activation>,
    weights: Vec<Vec<T>>,
    biases: Vec<Vec<T>>,
    adam: AdamState<T>,
}

fn validate_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(Error::validation(format!(
            "layer_dims needs at least an input and an output dim, got {layer_dims:?}"
        )));
    }
    if layer_dims.iter().any(|&d| d == 0) {
        return Err(Error::validation(format!(
            "layer_dims entries must be positive, got {layer_dims:?}"
        )));
    }
    Ok(())
}

/// Hidden layers are ReLU, the output layer is linear (raw Q-values).
fn default_activations(n_layers: usize) -> Vec<Activation> {
    let mut acts = vec![Activation::ReLU; n_layers];
    acts[n_layers - 1] = Activation::Linear;
    acts
}

/// Standard normal draw via Box-Muller; deterministic per rng state.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = loop {
        let u = rng.gen::<f64>();
        if u > 0.0 {
            break u;
        }
    };
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

impl<T: Scalar> DenseNetwork<T> {
    /// Fan-in-scaled zero-mean initialization (variance `2 / fan_in`),
    /// zero biases; deterministic per seed.
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Self> {
        validate_dims(layer_dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_layers = layer_dims.len() - 1;
        let mut weights = Vec::with_capacity(n_layers);
        let mut biases = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let (fan_in, fan_out) = (layer_dims[l], layer_dims[l + 1]);
            let std = (2.0 / fan_in as f64).sqrt();
            let w: Vec<T> = (0..fan_in * fan_out)
                .map(|_| T::from_f64(standard_normal(&mut rng) * std))
                .collect();
            weights.push(w);
            biases.push(vec![T::ZERO; fan_out]);
        }
        let adam = AdamState::zeroed(&weights, &biases);
        Ok(DenseNetwork {
            layer_dims: layer_dims.to_vec(),
            activations: default_activations(n_layers),
            weights,
            biases,
            adam,
        })
    }

    /// Builds a network from explicit parameters (fresh Adam state).
    /// `weights[l]` is row-major `(layer_dims[l+1], layer_dims[l])`.
    pub fn with_parameters(
        layer_dims: &[usize],
        activations: Vec<Activation>,
        weights: Vec<Vec<T>>,
        biases: Vec<Vec<T>>,
    ) -> Result<Self> {
        validate_dims(layer_dims)?;
        let n_layers = layer_dims.len() - 1;
        if activations.len() != n_layers || weights.len() != n_layers || biases.len() != n_layers {
            return Err(Error::validation(
                "activations/weights/biases must have one entry per layer".to_string(),
            ));
        }
        for l in 0..n_layers {
            let (rows, cols) = (layer_dims[l + 1], layer_dims[l]);
            if weights[l].len() != rows * cols {
                return Err(Error::ShapeMismatch {
                    what: "layer weights",
                    expected: rows * cols,
                    actual: weights[l].len(),
                });
            }
            if biases[l].len() != rows {
                return Err(Error::ShapeMismatch {
                    what: "layer biases",
                    expected: rows,
                    actual: biases[l].len(),
                });
            }
        }
        let adam = AdamState::zeroed(&weights, &biases);
        Ok(DenseNetwork {
            layer_dims: layer_dims.to_vec(),
            activations,
            weights,
            biases,
            adam,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("validated dims")
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn weights(&self) -> &[Vec<T>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<T>] {
        &self.biases
    }

    pub fn weight(&self, layer: usize, row: usize, col: usize) -> T {
        self.weights[layer][row * self.layer_dims[layer] + col]
    }

    pub fn set_weight(&mut self, layer: usize, row: usize, col: usize, v: T) {
        self.weights[layer][row * self.layer_dims[layer] + col] = v;
    }

    pub fn bias(&self, layer: usize, row: usize) -> T {
        self.biases[layer][row]
    }

    pub fn set_bias(&mut self, layer: usize, row: usize, v: T) {
        self.biases[layer][row] = v;
    }

    pub fn workspace(&self) -> Workspace<T> {
        let acts = self.layer_dims[1..]
            .iter()
            .map(|&d| vec![T::ZERO; d])
            .collect();
        let widest = *self.layer_dims.iter().max().expect("validated dims");
        Workspace {
            acts,
            delta: vec![T::ZERO; widest],
            delta_prev: vec![T::ZERO; widest],
        }
    }

    pub fn zeroed_gradients(&self) -> Gradients<T> {
        Gradients {
            weights: self.weights.iter().map(|w| vec![T::ZERO; w.len()]).collect(),
            biases: self.biases.iter().map(|b| vec![T::ZERO; b.len()]).collect(),
        }
    }

    fn check_input(&self, input: &[T]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                what: "network input",
                expected: self.input_dim(),
                actual: input.len(),
            });
        }
        if input.iter().any(|x| !x.is_finite_val()) {
            return Err(Error::validation("network input contains non-finite values"));
        }
        Ok(())
    }

    /// Pure forward pass; Q-values for every action.
    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        self.check_input(input)?;
        let mut ws = self.workspace();
        self.forward_into(input, &mut ws);
        Ok(ws.acts.last().expect("at least one layer").clone())
    }

    /// Forward pass writing post-activation outputs into the workspace.
    pub(crate) fn forward_into(&self, input: &[T], ws: &mut Workspace<T>) {
        debug_assert_eq!(input.len(), self.input_dim());
        for l in 0..self.weights.len() {
            let in_dim = self.layer_dims[l];
            let act = self.activations[l];
            let w = &self.weights[l];
            let b = &self.biases[l];
            // Split so the previous activation can be borrowed while writing the next.
            let (done, rest) = ws.acts.split_at_mut(l);
            let prev: &[T] = if l == 0 { input } else { &done[l - 1] };
            let out = &mut rest[0];
            for (o, y) in out.iter_mut().enumerate() {
                let row = &w[o * in_dim..(o + 1) * in_dim];
                *y = act.apply(b[o] + dot(row, prev));
            }
        }
    }

    /// Gradient of a scalar loss w.r.t. every weight and bias, given the
    /// loss gradient at the network output. Does not mutate the network.
    pub fn backprop(&self, input: &[T], output_grad: &[T]) -> Result<Gradients<T>> {
        self.check_input(input)?;
        if output_grad.len() != self.output_dim() {
            return Err(Error::ShapeMismatch {
                what: "output gradient",
                expected: self.output_dim(),
                actual: output_grad.len(),
            });
        }
        let mut ws = self.workspace();
        let mut grads = self.zeroed_gradients();
        self.forward_into(input, &mut ws);
        self.backprop_into(input, output_grad, &mut ws, &mut grads);
        Ok(grads)
    }

    /// Accumulating backward pass. `ws.acts` must hold the forward trace of
    /// `input`; parameter gradients are added into `grads`.
    pub(crate) fn backprop_into(
        &self,
        input: &[T],
        output_grad: &[T],
        ws: &mut Workspace<T>,
        grads: &mut Gradients<T>,
    ) {
        let n_layers = self.weights.len();
        ws.delta[..output_grad.len()].copy_from_slice(output_grad);
        for l in (0..n_layers).rev() {
            let in_dim = self.layer_dims[l];
            let out_dim = self.layer_dims[l + 1];
            let act = self.activations[l];
            let prev: &[T] = if l == 0 { &input[..] } else { &ws.acts[l - 1] };
            let out = &ws.acts[l];
            let gw = &mut grads.weights[l];
            let gb = &mut grads.biases[l];
            let d_prev = &mut ws.delta_prev[..in_dim];
            d_prev.fill(T::ZERO);
            for o in 0..out_dim {
                let dz = ws.delta[o] * act.grad_from_output(out[o]);
                if dz == T::ZERO {
                    continue;
                }
                gb[o] += dz;
                let row = o * in_dim;
                let w_row = &self.weights[l][row..row + in_dim];
                let g_row = &mut gw[row..row + in_dim];
                for ((g, dp), (&w, &p)) in g_row
                    .iter_mut()
                    .zip(d_prev.iter_mut())
                    .zip(w_row.iter().zip(prev.iter()))
                {
                    *g += dz * p;
                    *dp += dz * w;
                }
            }
            ws.delta[..in_dim].copy_from_slice(d_prev);
        }
    }

    /// One bias-corrected Adam update; increments the step counter.
    pub fn adam_step(&mut self, grads: &Gradients<T>, cfg: &AdamConfig) -> Result<()> {
        if grads.weights.len() != self.weights.len() || grads.biases.len() != self.biases.len() {
            return Err(Error::validation("gradient layer count does not match network"));
        }
        for l in 0..self.weights.len() {
            if grads.weights[l].len() != self.weights[l].len()
                || grads.biases[l].len() != self.biases[l].len()
            {
                return Err(Error::ShapeMismatch {
                    what: "gradient tensor",
                    expected: self.weights[l].len(),
                    actual: grads.weights[l].len(),
                });
            }
        }
        self.adam.step += 1;
        let t = self.adam.step;
        let alpha = T::from_f64(cfg.learning_rate);
        let b1 = T::from_f64(cfg.beta1);
        let b2 = T::from_f64(cfg.beta2);
        let one_minus_b1 = T::from_f64(1.0 - cfg.beta1);
        let one_minus_b2 = T::from_f64(1.0 - cfg.beta2);
        let corr1 = T::from_f64(1.0 - cfg.beta1.powi(t as i32));
        let corr2 = T::from_f64(1.0 - cfg.beta2.powi(t as i32));
        let eps = T::from_f64(cfg.epsilon_stabilizer);

        let update = |params: &mut [T], g: &[T], m: &mut [T], v: &mut [T]| {
            for i in 0..params.len() {
                m[i] = b1 * m[i] + one_minus_b1 * g[i];
                v[i] = b2 * v[i] + one_minus_b2 * g[i] * g[i];
                let m_hat = m[i] / corr1;
                let v_hat = v[i] / corr2;
                params[i] -= alpha * m_hat / (v_hat.sqrt() + eps);
            }
        };
        for l in 0..self.weights.len() {
            update(
                &mut self.weights[l],
                &grads.weights[l],
                &mut self.adam.m_weights[l],
                &mut self.adam.v_weights[l],
            );
            update(
                &mut self.biases[l],
                &grads.biases[l],
                &mut self.adam.m_biases[l],
                &mut self.adam.v_biases[l],
            );
        }
        Ok(())
    }

    /// SHA-256 over the little-endian bytes of all weights and biases
    /// (Adam state excluded).
    pub fn weight_digest(&self) -> [u8; 32] {
        let mut bytes = Vec::new();
        for l in 0..self.weights.len() {
            for &w in &self.weights[l] {
                w.write_le_bytes(&mut bytes);
            }
            for &b in &self.biases[l] {
                b.write_le_bytes(&mut bytes);
            }
        }
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        hasher.finalize().into()
    }

    pub(crate) fn validate_shapes(&self) -> Result<()> {
        validate_dims(&self.layer_dims)?;
        let n_layers = self.layer_dims.len() - 1;
        if self.activations.len() != n_layers
            || self.weights.len() != n_layers
            || self.biases.len() != n_layers
            || self.adam.m_weights.len() != n_layers
        {
            return Err(Error::Corrupt("network layer counts disagree".to_string()));
        }
        for l in 0..n_layers {
            let expect_w = self.layer_dims[l + 1] * self.layer_dims[l];
            let expect_b = self.layer_dims[l + 1];
            if self.weights[l].len() != expect_w
                || self.biases[l].len() != expect_b
                || self.adam.m_weights[l].len() != expect_w
                || self.adam.v_weights[l].len() != expect_w
                || self.adam.m_biases[l].len() != expect_b
                || self.adam.v_biases[l].len() != expect_b
            {
                return Err(Error::Corrupt(format!("layer {l} tensor shapes disagree")));
            }
        }
        Ok(())
    }
}

/// Dot product with four accumulators; keeps the reduction out of the
/// dependency chain so the optimizer can vectorize it.
#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::ZERO; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let ra = ca.remainder();
    let rb = cb.remainder();
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (&x, &y) in ra.iter().zip(rb.iter()) {
        s += x * y;
    }
    s
}

impl<T: Scalar> Workspace<T> {
    /// Post-activation output of the last layer from the most recent
    /// forward pass.
    pub(crate) fn output(&self) -> &[T] {
        self.acts.last().expect("at least one layer")
    }
}
