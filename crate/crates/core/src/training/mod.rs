//! Imitation and reinforcement learning for the agent.

pub mod gradcheck;
pub mod rewards;
mod rl;
mod seq;

pub use rl::{evaluate, finetune_rl, mean_return, policy_gradient, RlConfig, RlEval, RlReport};
pub use seq::{seq_frames, seq_vqa_accuracy, train_seq_vqa, SeqConfig};

use crate::agent::{
    Agent, AgentConfig, AgentError, AttrKind, Controller, EpisodeEnv, Navigator, StepObservation,
};
use crate::dataset::QuestionRecord;
use crate::metrics::MetricsError;
use crate::nn::{bce, clip_norm, nll, Momentum, Params};
use crate::qa::Comparator;
use crate::raycast::FEATURE_LEN;
use crate::seeds;
use crate::world::{Action, HouseLayout};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no world for house {0}")]
    MissingWorld(String),
    #[error("question {id}: {source}")]
    Record { id: String, source: AgentError },
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("no training questions")]
    Empty,
}

/// Weights of the SELECT and answer terms in the imitation objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { alpha: 1.0, beta: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IlConfig {
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch: usize,
    /// Global gradient-norm bound per update.
    pub clip: f64,
    pub seed: u64,
    pub weights: LossWeights,
}

impl Default for IlConfig {
    fn default() -> Self {
        IlConfig { lr: 1e-2, momentum: 0.9, epochs: 30, batch: 8, clip: 5.0, seed: 0, weights: LossWeights::default() }
    }
}

/// Everything `train` reads from its JSON config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub agent: AgentConfig,
    pub il: IlConfig,
    pub rl: RlConfig,
    pub seq: SeqConfig,
}

pub type Worlds = BTreeMap<String, HouseLayout>;

pub fn world_for<'a>(worlds: &'a Worlds, record: &QuestionRecord) -> Result<&'a HouseLayout, TrainError> {
    worlds.get(&record.house_id).ok_or_else(|| TrainError::MissingWorld(record.house_id.clone()))
}

/// The imitation objective on already computed probabilities:
/// navigator cross-entropy, plus `alpha` times SELECT binary cross-entropy,
/// plus `beta` times answer binary cross-entropy.
pub fn il_loss(nav: &[(&[f64], usize)], select: &[(f64, bool)], vqa: &[(f64, bool)], w: LossWeights) -> f64 {
    let ce: f64 = nav.iter().map(|(p, y)| nll(p, *y)).sum();
    let sel: f64 = select.iter().map(|(p, y)| bce(*p, *y as u8 as f64)).sum();
    let ans: f64 = vqa.iter().map(|(p, y)| bce(*p, *y as u8 as f64)).sum();
    ce + w.alpha * sel + w.beta * ans
}

/// Teacher-forcing inputs for one navigation step of a question.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedLeg {
    pub is_room: bool,
    pub tokens: Vec<usize>,
    pub actions: Vec<Action>,
    /// One observation per pose: the leg start, then after every action.
    pub frames: Vec<StepObservation>,
    pub panorama: Option<Vec<f64>>,
    pub position: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedRecord {
    pub id: String,
    pub legs: Vec<PreparedLeg>,
    pub compared: Vec<usize>,
    pub kinds: Vec<AttrKind>,
    pub comparator: Comparator,
    pub answer: bool,
    pub question: Vec<usize>,
}

/// Replays the shortest path through the episode engine and records what the
/// agent would observe at every pose.
pub fn prepare_record(world: &HouseLayout, record: &QuestionRecord, agent: &Agent) -> Result<PreparedRecord, TrainError> {
    let wrap = |source| TrainError::Record { id: record.id.clone(), source };
    let mut env = EpisodeEnv::new(world, record, usize::MAX).map_err(wrap)?;
    let mut legs = Vec::with_capacity(env.n_legs());
    for (i, actions) in record.path.legs.iter().enumerate() {
        let (is_room, phrase) = env.nav_step(i);
        let tokens = agent.vocab.encode(phrase);
        let mut frames = vec![env.observe()];
        for a in actions {
            env.act(*a).map_err(wrap)?;
            frames.push(env.observe());
        }
        let sel = env.select(false).map_err(wrap)?;
        legs.push(PreparedLeg {
            is_room,
            tokens,
            actions: actions.clone(),
            frames,
            panorama: sel.panorama,
            position: sel.position,
        });
    }
    let queries = record.program.nav_queries();
    let compared = record.program.compared_navs();
    Ok(PreparedRecord {
        id: record.id.clone(),
        kinds: compared.iter().map(|i| AttrKind::of(queries[*i])).collect(),
        compared,
        legs,
        comparator: record.comparator,
        answer: record.answer.is_yes(),
        question: agent.vocab.encode(&record.text),
    })
}

pub fn prepare_all(worlds: &Worlds, records: &[QuestionRecord], agent: &Agent) -> Result<Vec<PreparedRecord>, TrainError> {
    records.iter().map(|r| prepare_record(world_for(worlds, r)?, r, agent)).collect()
}

/// One gradient buffer per agent component, in checkpoint order.
pub type Grads = Vec<Vec<f64>>;

pub fn zero_grads(agent: &Agent) -> Grads {
    agent.components().iter().map(|(_, p)| p.zeros()).collect()
}

/// Teacher-forced outputs for one question.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcedOutput {
    pub loss: f64,
    pub p_answer: f64,
    /// SELECT decisions at threshold 0.5 that match the labels, and their count.
    pub select_hits: usize,
    pub select_total: usize,
    /// Key positions where SELECT fires, out of the number of legs.
    pub select_recall: usize,
    /// Navigator argmax actions that match the shortest path, and their count.
    pub nav_hits: usize,
    pub nav_total: usize,
}

fn prev_of(actions: &[Action], t: usize) -> Option<Action> {
    t.checked_sub(1).map(|i| actions[i])
}

/// Imitation loss of one question under teacher forcing; accumulates
/// gradients into `grads` when given.
pub fn record_loss(
    agent: &Agent,
    rec: &PreparedRecord,
    w: LossWeights,
    mut grads: Option<&mut Grads>,
) -> Result<ForcedOutput, AgentError> {
    struct LegPass {
        nav: (Vec<crate::nn::GruCache>, Vec<Vec<f64>>, Vec<Vec<f64>>),
        ctrl: (Vec<crate::nn::GruCache>, Vec<Vec<f64>>, Vec<f64>),
    }
    let mut loss = 0.0;
    let (mut select_hits, mut select_total, mut select_recall) = (0, 0, 0);
    let (mut nav_hits, mut nav_total) = (0, 0);
    let mut passes = Vec::with_capacity(rec.legs.len());
    for leg in &rec.legs {
        let emb = agent.encoder.encode(&leg.tokens);
        let nav = agent.navigator(leg.is_room);
        let n = leg.actions.len();
        let (mut caches, mut hs, mut dlogits) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        let mut h = nav.gru.zero_state();
        for t in 0..n {
            let f = &leg.frames[t];
            let x = Navigator::input(&f.features, &emb, prev_of(&leg.actions, t), &f.cues);
            let s = nav.step(&x, &h);
            let label = leg.actions[t].index();
            loss += nll(&s.probs, label);
            nav_hits += (crate::nn::argmax(&s.probs) == label) as usize;
            nav_total += 1;
            let mut d = s.probs;
            d[label] -= 1.0;
            dlogits.push(d);
            caches.push(s.cache);
            hs.push(s.h.clone());
            h = s.h;
        }
        let (mut ccaches, mut chs, mut cd) = (Vec::with_capacity(n + 1), Vec::with_capacity(n + 1), Vec::with_capacity(n + 1));
        let mut h = agent.controller.gru.zero_state();
        for t in 0..=n {
            let f = &leg.frames[t];
            let x = Controller::input(&f.features, &emb, &f.cues, leg.is_room, prev_of(&leg.actions, t));
            let s = agent.controller.step(&x, &h);
            let y = t == n;
            loss += w.alpha * bce(s.p_select, y as u8 as f64);
            select_hits += ((s.p_select > 0.5) == y) as usize;
            select_recall += (y && s.p_select > 0.5) as usize;
            select_total += 1;
            cd.push(w.alpha * (s.p_select - y as u8 as f64));
            ccaches.push(s.cache);
            chs.push(s.h.clone());
            h = s.h;
        }
        passes.push(LegPass { nav: (caches, hs, dlogits), ctrl: (ccaches, chs, cd) });
    }
    let mut inputs = Vec::with_capacity(rec.compared.len());
    for (i, kind) in rec.compared.iter().zip(&rec.kinds) {
        let leg = &rec.legs[*i];
        inputs.push(match kind {
            AttrKind::Color | AttrKind::Size => passes[*i].ctrl.1.last().expect("at least one step").clone(),
            AttrKind::RoomSize => leg.panorama.clone().ok_or_else(|| AgentError::Program("room leg without panorama".into()))?,
            AttrKind::Position => leg.position.to_vec(),
        });
    }
    let (p_answer, cache) = agent.cvqa.forward(&inputs, &rec.kinds, rec.comparator)?;
    let y = rec.answer as u8 as f64;
    loss += w.beta * bce(p_answer, y);

    if let Some(g) = grads.as_deref_mut() {
        let d_inputs = agent.cvqa.backward(&mut g[4], &cache, w.beta * (p_answer - y));
        let mut extra: Vec<Vec<Vec<f64>>> = rec.legs.iter().map(|l| vec![Vec::new(); l.actions.len() + 1]).collect();
        for ((i, kind), d) in rec.compared.iter().zip(&rec.kinds).zip(d_inputs) {
            if matches!(kind, AttrKind::Color | AttrKind::Size) {
                let slot = extra[*i].last_mut().expect("at least one step");
                if slot.is_empty() {
                    *slot = d;
                } else {
                    slot.iter_mut().zip(d).for_each(|(a, b)| *a += b);
                }
            }
        }
        let embed = agent.config.embed;
        for ((leg, pass), extra) in rec.legs.iter().zip(&passes).zip(&extra) {
            let mut d_emb = vec![0.0; embed];
            let mut add = |dxs: Vec<Vec<f64>>| {
                for dx in dxs {
                    d_emb.iter_mut().zip(&dx[FEATURE_LEN..FEATURE_LEN + embed]).for_each(|(a, b)| *a += b);
                }
            };
            let (c, h, d) = &pass.ctrl;
            add(agent.controller.backward(&mut g[3], c, h, d, extra));
            let (c, h, d) = &pass.nav;
            let slot = if leg.is_room { 1 } else { 2 };
            add(agent.navigator(leg.is_room).backward(&mut g[slot], c, h, d));
            agent.encoder.emb.backward_mean(&mut g[0], &leg.tokens, &d_emb);
        }
    }
    Ok(ForcedOutput { loss, p_answer, select_hits, select_total, select_recall, nav_hits, nav_total })
}

/// Per-component optimizers in checkpoint order.
pub(crate) fn optimizers(params: &[&Params], lr: f64, momentum: f64) -> Vec<Momentum> {
    params.iter().map(|p| Momentum::new(p.len(), lr, momentum)).collect()
}

/// Scales and clips a multi-component gradient as one vector.
pub(crate) fn finish_grads(grads: &mut [Vec<f64>], scale: f64, clip: f64) {
    let mut flat: Vec<f64> = grads.iter().flatten().map(|g| g * scale).collect();
    clip_norm(&mut flat, clip);
    let mut it = flat.into_iter();
    for g in grads.iter_mut() {
        for v in g.iter_mut() {
            *v = it.next().expect("same length");
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlReport {
    /// Mean per-question loss of every epoch, measured while training.
    pub epoch_losses: Vec<f64>,
}

/// Behavior cloning with the combined objective. Parameters end rounded to
/// checkpoint precision so reloaded models evaluate identically.
pub fn train_il(agent: &Agent, data: &[PreparedRecord], cfg: &IlConfig) -> Result<(Agent, IlReport), TrainError> {
    if data.is_empty() {
        return Err(TrainError::Empty);
    }
    let mut agent = agent.clone();
    let mut opts = optimizers(&agent.components().map(|(_, p)| p), cfg.lr, cfg.momentum);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(&[cfg.seed, epoch as u64]));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch.max(1)) {
            let mut g = zero_grads(&agent);
            for &i in batch {
                let out = record_loss(&agent, &data[i], cfg.weights, Some(&mut g))
                    .map_err(|source| TrainError::Record { id: data[i].id.clone(), source })?;
                total += out.loss;
            }
            finish_grads(&mut g, 1.0 / batch.len() as f64, cfg.clip);
            for ((opt, p), g) in opts.iter_mut().zip(agent.components_mut()).zip(&g) {
                opt.step(p, g);
            }
        }
        epoch_losses.push(total / data.len() as f64);
    }
    agent.round_to_f32();
    Ok((agent, IlReport { epoch_losses }))
}

/// Accuracy of teacher-forced answers and SELECT decisions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForcedAccuracy {
    pub answer: f64,
    pub select: f64,
    /// Fraction of key positions where SELECT fires.
    pub select_recall: f64,
    pub nav: f64,
    pub loss: f64,
}

/// Runs every question along its shortest path with SELECT at the key
/// positions, the setting where only the answering modules are judged.
pub fn forced_accuracy(agent: &Agent, data: &[PreparedRecord], w: LossWeights) -> Result<ForcedAccuracy, AgentError> {
    let (mut right, mut hits, mut total, mut loss) = (0usize, 0usize, 0usize, 0.0);
    let (mut recall, mut legs, mut nav, mut steps) = (0usize, 0usize, 0usize, 0usize);
    for rec in data {
        let out = record_loss(agent, rec, w, None)?;
        right += ((out.p_answer > 0.5) == rec.answer) as usize;
        hits += out.select_hits;
        total += out.select_total;
        recall += out.select_recall;
        legs += rec.legs.len();
        nav += out.nav_hits;
        steps += out.nav_total;
        loss += out.loss;
    }
    let ratio = |a: usize, b: usize| a as f64 / b.max(1) as f64;
    Ok(ForcedAccuracy {
        answer: ratio(right, data.len()),
        select: ratio(hits, total),
        select_recall: ratio(recall, legs),
        nav: ratio(nav, steps),
        loss: loss / data.len().max(1) as f64,
    })
}
