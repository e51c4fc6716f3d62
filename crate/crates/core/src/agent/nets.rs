//! The learnable pieces of the agent and the sequence baseline.

use super::AgentError;
use crate::nn::{sigmoid, softmax, Embedding, Gru, GruCache, Linear, Params};
use crate::qa::{Attribute, Comparator};
use crate::raycast::{CUE_LEN, FEATURE_LEN};
use crate::vocab::TokenVocab;
use crate::world::{Action, HEADINGS};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Previous-action one-hot: no action yet, then `Action::ALL`.
pub const PREV_LEN: usize = 4;
/// Target kind one-hot: object, room.
pub const KIND_LEN: usize = 2;
/// Panorama features: one frame per heading.
pub const PANORAMA_LEN: usize = HEADINGS as usize * FEATURE_LEN;
/// Agent positions are divided by this many meters.
pub const POSITION_SCALE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub hidden: usize,
    pub embed: usize,
    /// Shared attribute space of the compositional VQA head.
    pub attr: usize,
    pub head_hidden: usize,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig { hidden: 64, embed: 32, attr: 32, head_hidden: 32, seed: 0 }
    }
}

pub fn prev_one_hot(prev: Option<Action>) -> [f64; PREV_LEN] {
    let mut v = [0.0; PREV_LEN];
    v[prev.map_or(0, |a| a.index() + 1)] = 1.0;
    v
}

fn rng_for(seed: u64, component: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(crate::seeds::derive(&[seed, crate::seeds::of_str(component)]))
}

/// Backpropagation through time for a GRU with a linear read-out.
///
/// `dlogits[t]` (possibly empty) is the loss gradient on the read-out at step
/// `t`; `dh_extra[t]` (possibly empty) is an extra gradient on the hidden
/// state. Returns the gradient on every step's input.
fn bptt(
    p: &Params,
    g: &mut [f64],
    gru: &Gru,
    head: &Linear,
    caches: &[GruCache],
    hs: &[Vec<f64>],
    dlogits: &[Vec<f64>],
    dh_extra: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let n = caches.len();
    let mut dxs = vec![Vec::new(); n];
    let mut dh = vec![0.0; gru.hidden];
    for t in (0..n).rev() {
        if let Some(d) = dlogits.get(t).filter(|d| !d.is_empty()) {
            let back = head.backward(p, g, &hs[t], d);
            dh.iter_mut().zip(back).for_each(|(a, b)| *a += b);
        }
        if let Some(d) = dh_extra.get(t).filter(|d| !d.is_empty()) {
            dh.iter_mut().zip(d).for_each(|(a, b)| *a += b);
        }
        let (dx, prev) = gru.backward(p, g, &caches[t], &dh);
        dxs[t] = dx;
        dh = prev;
    }
    dxs
}

/// Mean-of-token-vectors phrase embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetEncoder {
    pub params: Params,
    pub emb: Embedding,
}

impl TargetEncoder {
    pub fn new(cfg: &AgentConfig, vocab: &TokenVocab) -> Self {
        let mut params = Params::new();
        let mut rng = rng_for(cfg.seed, "embed");
        let emb = Embedding::new(&mut params, "tokens", vocab.len(), cfg.embed, &mut rng);
        TargetEncoder { params, emb }
    }

    pub fn encode(&self, tokens: &[usize]) -> Vec<f64> {
        self.emb.mean(&self.params, tokens)
    }
}

/// One navigation module; rooms and objects each get their own.
#[derive(Debug, Clone, PartialEq)]
pub struct Navigator {
    pub params: Params,
    pub gru: Gru,
    pub head: Linear,
}

pub struct NavStep {
    pub probs: Vec<f64>,
    pub h: Vec<f64>,
    pub cache: GruCache,
}

impl Navigator {
    pub fn input_len(cfg: &AgentConfig) -> usize {
        FEATURE_LEN + cfg.embed + PREV_LEN + CUE_LEN
    }

    pub fn new(cfg: &AgentConfig, name: &str) -> Self {
        let mut params = Params::new();
        let mut rng = rng_for(cfg.seed, name);
        let gru = Gru::new(&mut params, "gru", Self::input_len(cfg), cfg.hidden, &mut rng);
        let head = Linear::new(&mut params, "policy", cfg.hidden, Action::ALL.len(), &mut rng);
        Navigator { params, gru, head }
    }

    pub fn input(features: &[f64], target: &[f64], prev: Option<Action>, cues: &[f64; CUE_LEN]) -> Vec<f64> {
        let mut x = Vec::with_capacity(features.len() + target.len() + PREV_LEN + CUE_LEN);
        x.extend_from_slice(features);
        x.extend_from_slice(target);
        x.extend_from_slice(&prev_one_hot(prev));
        x.extend_from_slice(cues);
        x
    }

    pub fn step(&self, x: &[f64], h: &[f64]) -> NavStep {
        let (h, cache) = self.gru.step(&self.params, x, h);
        let probs = softmax(&self.head.forward(&self.params, &h));
        NavStep { probs, h, cache }
    }

    /// Gradients for a leg given per-step logit gradients; returns input gradients.
    pub fn backward(&self, g: &mut [f64], caches: &[GruCache], hs: &[Vec<f64>], dlogits: &[Vec<f64>]) -> Vec<Vec<f64>> {
        bptt(&self.params, g, &self.gru, &self.head, caches, hs, dlogits, &[])
    }
}

/// Decides SELECT every step; its hidden state at SELECT is an object's
/// stored attribute feature.
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    pub params: Params,
    pub gru: Gru,
    pub head: Linear,
}

pub struct ControlStep {
    pub p_select: f64,
    pub h: Vec<f64>,
    pub cache: GruCache,
}

impl Controller {
    pub fn input_len(cfg: &AgentConfig) -> usize {
        FEATURE_LEN + cfg.embed + CUE_LEN + KIND_LEN + PREV_LEN
    }

    pub fn new(cfg: &AgentConfig) -> Self {
        let mut params = Params::new();
        let mut rng = rng_for(cfg.seed, "controller");
        let gru = Gru::new(&mut params, "gru", Self::input_len(cfg), cfg.hidden, &mut rng);
        let head = Linear::new(&mut params, "select", cfg.hidden, 1, &mut rng);
        Controller { params, gru, head }
    }

    pub fn input(
        features: &[f64],
        target: &[f64],
        cues: &[f64; CUE_LEN],
        is_room: bool,
        prev: Option<Action>,
    ) -> Vec<f64> {
        let mut x = Vec::with_capacity(features.len() + target.len() + CUE_LEN + KIND_LEN + PREV_LEN);
        x.extend_from_slice(features);
        x.extend_from_slice(target);
        x.extend_from_slice(cues);
        x.extend_from_slice(if is_room { &[0.0, 1.0] } else { &[1.0, 0.0] });
        x.extend_from_slice(&prev_one_hot(prev));
        x
    }

    pub fn step(&self, x: &[f64], h: &[f64]) -> ControlStep {
        let (h, cache) = self.gru.step(&self.params, x, h);
        let p_select = sigmoid(self.head.forward(&self.params, &h)[0]);
        ControlStep { p_select, h, cache }
    }

    /// `dlogit[t]` is the gradient on the SELECT logit; `dh_extra[t]` any
    /// gradient reaching the hidden state from the VQA head.
    pub fn backward(
        &self,
        g: &mut [f64],
        caches: &[GruCache],
        hs: &[Vec<f64>],
        dlogit: &[f64],
        dh_extra: &[Vec<f64>],
    ) -> Vec<Vec<f64>> {
        let dl: Vec<Vec<f64>> = dlogit.iter().map(|d| vec![*d]).collect();
        bptt(&self.params, g, &self.gru, &self.head, caches, hs, &dl, dh_extra)
    }
}

/// How a stored feature enters the VQA head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttrKind {
    Color,
    Size,
    RoomSize,
    /// Agent position at SELECT, for distance comparisons.
    Position,
}

impl AttrKind {
    pub const ALL: [AttrKind; 4] = [AttrKind::Color, AttrKind::Size, AttrKind::RoomSize, AttrKind::Position];

    pub fn of(query: Option<Attribute>) -> AttrKind {
        match query {
            Some(Attribute::Color) => AttrKind::Color,
            Some(Attribute::Size) => AttrKind::Size,
            Some(Attribute::RoomSize) => AttrKind::RoomSize,
            None => AttrKind::Position,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn input_len(self, cfg: &AgentConfig) -> usize {
        match self {
            AttrKind::Color | AttrKind::Size => cfg.hidden,
            AttrKind::RoomSize => PANORAMA_LEN,
            AttrKind::Position => 2,
        }
    }
}

/// Compositional VQA: per-attribute projections into a shared space, then a
/// comparator-specific classifier over the concatenated projections.
#[derive(Debug, Clone, PartialEq)]
pub struct Cvqa {
    pub params: Params,
    pub proj: Vec<Linear>,
    pub heads: Vec<(Linear, Linear)>,
    attr: usize,
}

#[derive(Debug, Clone)]
pub struct CvqaCache {
    inputs: Vec<Vec<f64>>,
    kinds: Vec<AttrKind>,
    comparator: Comparator,
    /// Concatenated post-activation projections.
    z: Vec<f64>,
    /// Hidden layer after the rectifier.
    a: Vec<f64>,
}

impl Cvqa {
    pub fn new(cfg: &AgentConfig) -> Self {
        let mut params = Params::new();
        let mut rng = rng_for(cfg.seed, "cvqa");
        let proj = AttrKind::ALL
            .iter()
            .map(|k| Linear::new(&mut params, &format!("proj.{k:?}"), k.input_len(cfg), cfg.attr, &mut rng))
            .collect();
        let heads = Comparator::ALL
            .iter()
            .map(|c| {
                let hidden = Linear::new(&mut params, &format!("head.{c:?}.0"), c.arity() * cfg.attr, cfg.head_hidden, &mut rng);
                let out = Linear::new(&mut params, &format!("head.{c:?}.1"), cfg.head_hidden, 1, &mut rng);
                (hidden, out)
            })
            .collect();
        Cvqa { params, proj, heads, attr: cfg.attr }
    }

    pub fn forward(&self, inputs: &[Vec<f64>], kinds: &[AttrKind], comparator: Comparator) -> Result<(f64, CvqaCache), AgentError> {
        if inputs.len() != comparator.arity() || kinds.len() != inputs.len() {
            return Err(AgentError::Arity { comparator, expected: comparator.arity(), got: inputs.len() });
        }
        let p = &self.params;
        let mut z = Vec::with_capacity(inputs.len() * self.attr);
        for (x, k) in inputs.iter().zip(kinds) {
            let lin = &self.proj[k.index()];
            if x.len() != lin.n_in {
                return Err(AgentError::FeatureLen { kind: *k, expected: lin.n_in, got: x.len() });
            }
            z.extend(lin.forward(p, x).into_iter().map(|v| v.max(0.0)));
        }
        let (hidden, out) = &self.heads[comparator.index()];
        let a: Vec<f64> = hidden.forward(p, &z).into_iter().map(|v| v.max(0.0)).collect();
        let logit = out.forward(p, &a)[0];
        let cache = CvqaCache { inputs: inputs.to_vec(), kinds: kinds.to_vec(), comparator, z, a };
        Ok((sigmoid(logit), cache))
    }

    /// Returns the gradient on every input feature.
    pub fn backward(&self, g: &mut [f64], c: &CvqaCache, dlogit: f64) -> Vec<Vec<f64>> {
        let p = &self.params;
        let (hidden, out) = &self.heads[c.comparator.index()];
        let mut da = out.backward(p, g, &c.a, &[dlogit]);
        for (d, a) in da.iter_mut().zip(&c.a) {
            if *a <= 0.0 {
                *d = 0.0;
            }
        }
        let mut dz = hidden.backward(p, g, &c.z, &da);
        for (d, z) in dz.iter_mut().zip(&c.z) {
            if *z <= 0.0 {
                *d = 0.0;
            }
        }
        c.inputs
            .iter()
            .zip(&c.kinds)
            .enumerate()
            .map(|(i, (x, k))| self.proj[k.index()].backward(p, g, x, &dz[i * self.attr..(i + 1) * self.attr]))
            .collect()
    }
}

/// Baseline: a recurrent encoder over every frame of the path with the
/// question embedding appended, answering from its final state.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqVqa {
    pub params: Params,
    pub emb: Embedding,
    pub gru: Gru,
    pub head: Linear,
}

pub struct SeqCache {
    tokens: Vec<usize>,
    caches: Vec<GruCache>,
    hs: Vec<Vec<f64>>,
    embed: usize,
}

impl SeqVqa {
    pub fn new(cfg: &AgentConfig, vocab: &TokenVocab) -> Self {
        let mut params = Params::new();
        let mut rng = rng_for(cfg.seed, "seq-vqa");
        let emb = Embedding::new(&mut params, "tokens", vocab.len(), cfg.embed, &mut rng);
        let gru = Gru::new(&mut params, "gru", FEATURE_LEN + cfg.embed, cfg.hidden, &mut rng);
        let head = Linear::new(&mut params, "answer", cfg.hidden, 1, &mut rng);
        SeqVqa { params, emb, gru, head }
    }

    pub fn forward(&self, frames: &[Vec<f64>], tokens: &[usize]) -> (f64, SeqCache) {
        let p = &self.params;
        let q = self.emb.mean(p, tokens);
        let mut h = self.gru.zero_state();
        let mut caches = Vec::with_capacity(frames.len());
        let mut hs = Vec::with_capacity(frames.len());
        for f in frames {
            let mut x = f.clone();
            x.extend_from_slice(&q);
            let (nh, c) = self.gru.step(p, &x, &h);
            h = nh;
            caches.push(c);
            hs.push(h.clone());
        }
        let logit = self.head.forward(p, &h)[0];
        (sigmoid(logit), SeqCache { tokens: tokens.to_vec(), caches, hs, embed: self.emb.dim })
    }

    pub fn backward(&self, g: &mut [f64], c: &SeqCache, dlogit: f64) {
        let p = &self.params;
        if c.hs.is_empty() {
            self.head.backward(p, g, &self.gru.zero_state(), &[dlogit]);
            return;
        }
        let mut dlogits = vec![Vec::new(); c.hs.len()];
        dlogits[c.hs.len() - 1] = vec![dlogit];
        let dxs = bptt(p, g, &self.gru, &self.head, &c.caches, &c.hs, &dlogits, &[]);
        let mut dq = vec![0.0; c.embed];
        for dx in &dxs {
            for (d, v) in dq.iter_mut().zip(&dx[FEATURE_LEN..]) {
                *d += v;
            }
        }
        self.emb.backward_mean(g, &c.tokens, &dq);
    }
}
