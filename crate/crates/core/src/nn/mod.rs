//! Small dense networks with hand-written gradients.
//!
//! Parameters live in one flat `f64` buffer per component ([`Params`]);
//! layers hold [`Slot`]s into it and accumulate gradients into a buffer of
//! the same length.

mod checkpoint;
mod layers;
mod optim;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, ComponentMeta, CHECKPOINT_SCHEMA};
pub use layers::{Embedding, Gru, GruCache, Linear};
pub use optim::{clip_norm, Momentum};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Guard for logarithms of probabilities.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// A contiguous range of a [`Params`] buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub offset: usize,
    pub len: usize,
}

impl Slot {
    pub fn range(self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Params {
    specs: Vec<TensorSpec>,
    pub data: Vec<f64>,
}

impl Params {
    pub fn new() -> Self {
        Params::default()
    }

    /// Appends a tensor drawn uniformly from `[-scale, scale]`.
    pub fn add(&mut self, name: &str, shape: &[usize], scale: f64, rng: &mut impl Rng) -> Slot {
        let spec = TensorSpec { name: name.to_string(), shape: shape.to_vec() };
        let slot = Slot { offset: self.data.len(), len: spec.numel() };
        for _ in 0..slot.len {
            let v = if scale > 0.0 { rng.gen_range(-scale..scale) } else { 0.0 };
            self.data.push(v);
        }
        self.specs.push(spec);
        slot
    }

    pub fn specs(&self) -> &[TensorSpec] {
        &self.specs
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, s: Slot) -> &[f64] {
        &self.data[s.range()]
    }

    pub fn zeros(&self) -> Vec<f64> {
        vec![0.0; self.data.len()]
    }

    /// Rounds every value to the nearest `f32`, the checkpoint precision.
    pub fn round_to_f32(&mut self) {
        for v in &mut self.data {
            *v = *v as f32 as f64;
        }
    }

    /// Hex digest of the exact parameter bits.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for v in &self.data {
            h.update(v.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Replaces the values, keeping the layout.
    pub fn load_values(&mut self, values: &[f64]) -> Result<(), String> {
        if values.len() != self.data.len() {
            return Err(format!("expected {} values, got {}", self.data.len(), values.len()));
        }
        self.data.copy_from_slice(values);
        Ok(())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Binary cross-entropy of probability `p` against label `y`, with the
/// probability clamped to `[PROB_EPS, 1 - PROB_EPS]`.
pub fn bce(p: f64, y: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Negative log-probability of `label` under `probs`, clamped like [`bce`].
pub fn nll(probs: &[f64], label: usize) -> f64 {
    -probs[label].max(PROB_EPS).ln()
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Largest relative error between analytic gradients and fourth-order
/// central finite differences over the given parameter indices.
///
/// Each index is probed with steps `eps`, `eps / 10` and `eps / 100` and keeps
/// the closest estimate: a rectifier kink inside a wide stencil or roundoff in
/// a narrow one spoils only some of them, a wrong gradient spoils all.
///
/// `loss` returns the loss and the analytic gradient for a parameter buffer.
pub fn gradient_check(
    params: &Params,
    indices: &[usize],
    eps: f64,
    loss: impl Fn(&Params) -> (f64, Vec<f64>),
) -> f64 {
    let (_, analytic) = loss(params);
    let mut worst: f64 = 0.0;
    let mut p = params.clone();
    for &i in indices {
        let orig = p.data[i];
        let a = analytic[i];
        let mut err = f64::INFINITY;
        for h in [eps, eps / 10.0, eps / 100.0] {
            let mut at = |k: f64| {
                p.data[i] = orig + k * h;
                loss(&p).0
            };
            let numeric = (at(-2.0) - 8.0 * at(-1.0) + 8.0 * at(1.0) - at(2.0)) / (12.0 * h);
            let denom = a.abs().max(numeric.abs()).max(1e-6);
            err = err.min((a - numeric).abs() / denom);
        }
        p.data[i] = orig;
        worst = worst.max(err);
    }
    worst
}
