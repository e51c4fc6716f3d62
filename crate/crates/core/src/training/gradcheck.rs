//! Finite-difference checks of every learnable component on randomized
//! small fixtures.

use super::{record_loss, zero_grads, LossWeights, PreparedLeg, PreparedRecord};
use crate::agent::{
    Agent, AgentConfig, AttrKind, Controller, Navigator, SeqVqa, StepObservation, COMPONENTS, PANORAMA_LEN,
};
use crate::nn::{bce, gradient_check, Params};
use crate::qa::Comparator;
use crate::raycast::{CUE_LEN, FEATURE_LEN};
use crate::world::Action;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-3;

/// Small sizes keep the checks fast.
pub fn small_config(seed: u64) -> AgentConfig {
    AgentConfig { hidden: 5, embed: 4, attr: 3, head_hidden: 4, seed }
}

/// Zero-initialized biases put units exactly on a rectifier kink when every
/// input unit is inactive; a small jitter moves the fixture off it.
fn jitter(p: &mut Params, rng: &mut ChaCha8Rng) {
    p.data.iter_mut().for_each(|v| *v += rng.gen_range(-0.05..0.05));
}

/// Agent at `small_config(seed)` with jittered parameters.
pub fn fixture_agent(seed: u64) -> Agent {
    let mut agent = Agent::new(small_config(seed));
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6a17);
    for p in agent.components_mut() {
        jitter(p, &mut rng);
    }
    agent
}

fn randv(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn indices(p: &Params, rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..p.len())).collect();
    idx.sort_unstable();
    idx.dedup();
    idx
}

fn random_leg(rng: &mut ChaCha8Rng, is_room: bool, steps: usize) -> PreparedLeg {
    let frames = (0..=steps)
        .map(|_| {
            let cues: Vec<f64> = (0..CUE_LEN).map(|_| rng.gen_range(0.0..1.0)).collect();
            StepObservation { features: randv(rng, FEATURE_LEN), cues: cues.try_into().expect("cue length") }
        })
        .collect();
    PreparedLeg {
        is_room,
        tokens: (0..3).map(|_| rng.gen_range(0..20)).collect(),
        actions: (0..steps).map(|_| Action::ALL[rng.gen_range(0..3)]).collect(),
        frames,
        panorama: is_room.then(|| randv(rng, PANORAMA_LEN)),
        position: [rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0)],
    }
}

/// A question whose comparison uses the given attribute kind.
pub fn random_record(rng: &mut ChaCha8Rng, comparator: Comparator) -> PreparedRecord {
    let (kind, is_room) = match comparator {
        Comparator::EqualColor => (AttrKind::Color, false),
        Comparator::Bigger | Comparator::Smaller => (AttrKind::Size, false),
        Comparator::RoomBigger | Comparator::RoomSmaller => (AttrKind::RoomSize, true),
        Comparator::Closer | Comparator::Farther => (AttrKind::Position, false),
    };
    let n = comparator.arity();
    // a leading room leg that is only navigated, as in cross-room questions
    let mut legs = vec![random_leg(rng, true, 2)];
    legs.extend((0..n).map(|i| random_leg(rng, is_room, 1 + i % 3)));
    PreparedRecord {
        id: format!("fixture-{comparator:?}"),
        legs,
        compared: (1..=n).collect(),
        kinds: vec![kind; n],
        comparator,
        answer: rng.gen_bool(0.5),
        question: (0..6).map(|_| rng.gen_range(0..20)).collect(),
    }
}

/// Worst relative error of the imitation-loss gradient per agent component.
pub fn il_errors(seed: u64) -> Vec<(String, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let agent = fixture_agent(seed);
    let w = LossWeights { alpha: 0.7, beta: 1.3 };
    let mut out = Vec::new();
    for comparator in Comparator::ALL {
        let rec = random_record(&mut rng, comparator);
        for (k, name) in COMPONENTS.iter().enumerate() {
            let base = agent.components()[k].1.clone();
            let idx = indices(&base, &mut rng, 40);
            let err = gradient_check(&base, &idx, EPS, |p| {
                let mut a = agent.clone();
                *a.components_mut()[k] = p.clone();
                let mut g = zero_grads(&a);
                let l = record_loss(&a, &rec, w, Some(&mut g)).expect("fixture is well formed").loss;
                (l, g.swap_remove(k))
            });
            out.push((format!("il/{comparator:?}/{name}"), err));
        }
    }
    out
}

/// Navigator under per-step cross-entropy.
pub fn navigator_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = small_config(seed);
    let nav = fixture_agent(seed).nav_object;
    let xs: Vec<Vec<f64>> = (0..4).map(|_| randv(&mut rng, Navigator::input_len(&cfg))).collect();
    let labels: Vec<usize> = (0..4).map(|_| rng.gen_range(0..3)).collect();
    let idx = indices(&nav.params, &mut rng, 60);
    gradient_check(&nav.params, &idx, EPS, |p| {
        let n = Navigator { params: p.clone(), ..nav.clone() };
        let (mut loss, mut caches, mut hs, mut d) = (0.0, vec![], vec![], vec![]);
        let mut h = n.gru.zero_state();
        for (x, y) in xs.iter().zip(&labels) {
            let s = n.step(x, &h);
            loss -= s.probs[*y].ln();
            let mut dl = s.probs.clone();
            dl[*y] -= 1.0;
            d.push(dl);
            caches.push(s.cache);
            hs.push(s.h.clone());
            h = s.h;
        }
        let mut g = p.zeros();
        n.backward(&mut g, &caches, &hs, &d);
        (loss, g)
    })
}

/// Controller under per-step SELECT cross-entropy plus a linear probe of
/// the final hidden state.
pub fn controller_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = small_config(seed);
    let ctrl = fixture_agent(seed).controller;
    let xs: Vec<Vec<f64>> = (0..4).map(|_| randv(&mut rng, Controller::input_len(&cfg))).collect();
    let probe = randv(&mut rng, cfg.hidden);
    let idx = indices(&ctrl.params, &mut rng, 60);
    gradient_check(&ctrl.params, &idx, EPS, |p| {
        let c = Controller { params: p.clone(), ..ctrl.clone() };
        let (mut loss, mut caches, mut hs, mut d) = (0.0, vec![], vec![], vec![]);
        let mut h = c.gru.zero_state();
        for (t, x) in xs.iter().enumerate() {
            let s = c.step(x, &h);
            let y = (t == xs.len() - 1) as u8 as f64;
            loss += bce(s.p_select, y);
            d.push(s.p_select - y);
            caches.push(s.cache);
            hs.push(s.h.clone());
            h = s.h;
        }
        loss += probe.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>();
        let mut extra = vec![Vec::new(); xs.len()];
        extra[xs.len() - 1] = probe.clone();
        let mut g = p.zeros();
        c.backward(&mut g, &caches, &hs, &d, &extra);
        (loss, g)
    })
}

/// Answer head, every comparator, every attribute kind it accepts.
pub fn cvqa_errors(seed: u64) -> Vec<(String, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = small_config(seed);
    let head = fixture_agent(seed).cvqa;
    Comparator::ALL
        .iter()
        .map(|&c| {
            let rec = random_record(&mut rng, c);
            let kind = rec.kinds[0];
            let inputs: Vec<Vec<f64>> = (0..c.arity()).map(|_| randv(&mut rng, kind.input_len(&cfg))).collect();
            let y = rng.gen_bool(0.5) as u8 as f64;
            let idx = indices(&head.params, &mut rng, 80);
            let err = gradient_check(&head.params, &idx, EPS, |p| {
                let mut h = head.clone();
                h.params = p.clone();
                let (prob, cache) = h.forward(&inputs, &rec.kinds, c).expect("arity");
                let mut g = p.zeros();
                h.backward(&mut g, &cache, prob - y);
                (bce(prob, y), g)
            });
            (format!("cvqa/{c:?}"), err)
        })
        .collect()
}

pub fn seq_vqa_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = small_config(seed);
    let mut model = SeqVqa::new(&cfg, &crate::vocab::TokenVocab::default());
    jitter(&mut model.params, &mut rng);
    let frames: Vec<Vec<f64>> = (0..5).map(|_| randv(&mut rng, FEATURE_LEN)).collect();
    let tokens: Vec<usize> = (0..6).map(|_| rng.gen_range(0..20)).collect();
    let idx = indices(&model.params, &mut rng, 80);
    gradient_check(&model.params, &idx, EPS, |p| {
        let m = SeqVqa { params: p.clone(), ..model.clone() };
        let (prob, cache) = m.forward(&frames, &tokens);
        let mut g = p.zeros();
        m.backward(&mut g, &cache, prob - 1.0);
        (bce(prob, 1.0), g)
    })
}

/// Every check, named.
pub fn all_errors(seed: u64) -> Vec<(String, f64)> {
    let mut out = vec![
        ("navigator".to_string(), navigator_error(seed)),
        ("controller".to_string(), controller_error(seed)),
        ("seq_vqa".to_string(), seq_vqa_error(seed)),
        ("rl/nav_object".to_string(), super::rl::policy_gradient_error(seed)),
    ];
    out.extend(cvqa_errors(seed));
    out.extend(il_errors(seed));
    out
}
