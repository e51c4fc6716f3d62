//! REINFORCE fine-tuning of the two navigators.

use super::rewards::{returns, RewardSpec};
use super::{finish_grads, optimizers, world_for, TrainError, Worlds};
use crate::agent::{run_episode_with, Agent, Driver, EpisodeTrace, LegRollout};
use crate::dataset::QuestionRecord;
use crate::metrics::{compute_metrics, MetricsReport};
use crate::seeds;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RlConfig {
    pub lr: f64,
    pub momentum: f64,
    pub iterations: usize,
    /// Sampled episodes per update.
    pub episodes: usize,
    pub entropy: f64,
    pub clip: f64,
    pub budget: usize,
    /// Validation runs every this many updates.
    pub eval_every: usize,
    pub seed: u64,
    pub rewards: RewardSpec,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            lr: 1e-3,
            momentum: 0.9,
            iterations: 40,
            episodes: 16,
            entropy: 0.01,
            clip: 5.0,
            budget: crate::agent::DEFAULT_BUDGET,
            eval_every: 10,
            seed: 0,
            rewards: RewardSpec::default(),
        }
    }
}

/// Validation summary of one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlEval {
    /// Updates applied; 0 is the imitation checkpoint.
    pub iteration: usize,
    pub d_delta: f64,
    pub h_t: f64,
    pub mean_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlReport {
    pub history: Vec<RlEval>,
    /// Iteration of the returned parameters.
    pub selected: usize,
}

/// Greedy episodes for every record.
pub fn evaluate(
    agent: &Agent,
    worlds: &Worlds,
    records: &[QuestionRecord],
    budget: usize,
) -> Result<(Vec<EpisodeTrace>, MetricsReport), TrainError> {
    let mut traces = Vec::with_capacity(records.len());
    for r in records {
        let driver = Driver::Agent { agent, sampler: None, rollout: None };
        let t = run_episode_with(world_for(worlds, r)?, r, driver, budget, RewardSpec::default())
            .map_err(|source| TrainError::Record { id: r.id.clone(), source })?;
        traces.push(t);
    }
    let report = compute_metrics(&traces, records)?;
    Ok((traces, report))
}

/// Mean per-episode sum of rewards.
pub fn mean_return(traces: &[EpisodeTrace]) -> f64 {
    if traces.is_empty() {
        return 0.0;
    }
    traces.iter().map(|t| t.steps.iter().map(|s| s.reward).sum::<f64>()).sum::<f64>() / traces.len() as f64
}

/// Gradients of the policy-gradient loss for `[nav_room, nav_object]`.
///
/// Loss: `-sum_t (G_t - b) log pi(a_t) - entropy * H(pi_t)`, with `G_t` the
/// discounted reward-to-go within a leg and `b` the mean of all `G_t` in the batch.
pub fn policy_gradient(agent: &Agent, legs: &[LegRollout], gamma: f64, entropy: f64) -> [Vec<f64>; 2] {
    let mut g = [agent.nav_room.params.zeros(), agent.nav_object.params.zeros()];
    let rets: Vec<Vec<f64>> = legs.iter().map(|l| returns(&l.rewards, gamma)).collect();
    let n: usize = rets.iter().map(Vec::len).sum();
    if n == 0 {
        return g;
    }
    let baseline = rets.iter().flatten().sum::<f64>() / n as f64;
    for (leg, ret) in legs.iter().zip(&rets) {
        let dlogits: Vec<Vec<f64>> = leg
            .probs
            .iter()
            .zip(&leg.actions)
            .zip(ret)
            .map(|((p, a), r)| {
                let adv = r - baseline;
                let h: f64 = -p.iter().map(|q| q * q.max(1e-12).ln()).sum::<f64>();
                p.iter()
                    .enumerate()
                    .map(|(j, q)| {
                        let pg = adv * (q - (j == *a) as u8 as f64);
                        pg + entropy * q * (q.max(1e-12).ln() + h)
                    })
                    .collect()
            })
            .collect();
        let (nav, slot) = if leg.is_room { (&agent.nav_room, 0) } else { (&agent.nav_object, 1) };
        nav.backward(&mut g[slot], &leg.caches, &leg.hs, &dlogits);
    }
    g
}

fn summarize(iteration: usize, traces: &[EpisodeTrace], m: &MetricsReport) -> RlEval {
    RlEval { iteration, d_delta: m.d_delta, h_t: m.h_t, mean_return: mean_return(traces) }
}

/// Fine-tunes the navigators with sampled episodes. The controller, answer
/// head and embeddings stay fixed. A fine-tuned candidate replaces the
/// imitation parameters only if, on `val`, neither d_delta nor h_T drops and
/// the mean return rises.
pub fn finetune_rl(
    agent: &Agent,
    worlds: &Worlds,
    train: &[QuestionRecord],
    val: &[QuestionRecord],
    cfg: &RlConfig,
) -> Result<(Agent, RlReport), TrainError> {
    if train.is_empty() {
        return Err(TrainError::Empty);
    }
    let (traces, m) = evaluate(agent, worlds, val, cfg.budget)?;
    let base = summarize(0, &traces, &m);
    let mut best = (agent.clone(), base.clone());
    let mut history = vec![base.clone()];
    let mut cur = agent.clone();
    let mut opts = optimizers(&[&cur.nav_room.params, &cur.nav_object.params], cfg.lr, cfg.momentum);
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(&[cfg.seed, 0x5e1]));
    for it in 1..=cfg.iterations {
        let mut legs = Vec::new();
        for _ in 0..cfg.episodes {
            let r = &train[rng.gen_range(0..train.len())];
            let mut sampler = ChaCha8Rng::seed_from_u64(rng.gen());
            let driver = Driver::Agent { agent: &cur, sampler: Some(&mut sampler), rollout: Some(&mut legs) };
            run_episode_with(world_for(worlds, r)?, r, driver, cfg.budget, cfg.rewards)
                .map_err(|source| TrainError::Record { id: r.id.clone(), source })?;
        }
        let mut g = policy_gradient(&cur, &legs, cfg.rewards.gamma, cfg.entropy).to_vec();
        finish_grads(&mut g, 1.0 / cfg.episodes.max(1) as f64, cfg.clip);
        opts[0].step(&mut cur.nav_room.params, &g[0]);
        opts[1].step(&mut cur.nav_object.params, &g[1]);
        if it % cfg.eval_every.max(1) == 0 || it == cfg.iterations {
            let mut cand = cur.clone();
            cand.round_to_f32();
            let (traces, m) = evaluate(&cand, worlds, val, cfg.budget)?;
            let e = summarize(it, &traces, &m);
            if e.d_delta >= base.d_delta && e.h_t >= base.h_t && e.mean_return > best.1.mean_return {
                best = (cand, e.clone());
            }
            history.push(e);
        }
    }
    let selected = best.1.iteration;
    Ok((best.0, RlReport { history, selected }))
}

/// Finite-difference check of [`policy_gradient`] on random rollouts.
pub(crate) fn policy_gradient_error(seed: u64) -> f64 {
    let agent = super::gradcheck::fixture_agent(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_in = crate::agent::Navigator::input_len(&agent.config);
    let episodes: Vec<(Vec<Vec<f64>>, Vec<usize>, Vec<f64>)> = [4, 2]
        .iter()
        .map(|&n| {
            let xs = (0..n).map(|_| (0..n_in).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let acts = (0..n).map(|_| rng.gen_range(0..3)).collect();
            let rewards = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            (xs, acts, rewards)
        })
        .collect();
    let (gamma, entropy) = (0.9, 0.05);
    let roll = |a: &Agent| -> Vec<LegRollout> {
        episodes
            .iter()
            .map(|(xs, acts, rewards)| {
                let nav = &a.nav_object;
                let mut l = LegRollout { is_room: false, actions: acts.clone(), rewards: rewards.clone(), ..Default::default() };
                let mut h = nav.gru.zero_state();
                for x in xs {
                    let s = nav.step(x, &h);
                    l.probs.push(s.probs);
                    l.caches.push(s.cache);
                    l.hs.push(s.h.clone());
                    h = s.h;
                }
                l
            })
            .collect()
    };
    let idx: Vec<usize> = (0..agent.nav_object.params.len()).step_by(11).collect();
    crate::nn::gradient_check(&agent.nav_object.params, &idx, 1e-3, |p| {
        let mut a = agent.clone();
        a.nav_object.params = p.clone();
        let legs = roll(&a);
        let rets: Vec<Vec<f64>> = legs.iter().map(|l| returns(&l.rewards, gamma)).collect();
        let n: usize = rets.iter().map(Vec::len).sum();
        let b = rets.iter().flatten().sum::<f64>() / n as f64;
        let mut loss = 0.0;
        for (l, ret) in legs.iter().zip(&rets) {
            for ((p, a), r) in l.probs.iter().zip(&l.actions).zip(ret) {
                let h: f64 = -p.iter().map(|q| q * q.ln()).sum::<f64>();
                loss += -(r - b) * p[*a].ln() - entropy * h;
            }
        }
        (loss, policy_gradient(&a, &legs, gamma, entropy)[1].clone())
    })
}
