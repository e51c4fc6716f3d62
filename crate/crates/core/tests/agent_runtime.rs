use mteqa::agent::{
    question_only_baselines, run_episode, Agent, AgentConfig, AgentError, AttrKind, Cvqa, Driver, EpisodeEnv,
    MostFrequent, Move, Navigator, SeqVqa, DEFAULT_BUDGET, PANORAMA_LEN,
};
use mteqa::dataset::{build_dataset, Answer, Dataset, DatasetConfig, QuestionRecord};
use mteqa::metrics::compute_metrics;
use mteqa::procgen::{generate_house, GenConfig};
use mteqa::qa::Comparator;
use mteqa::raycast::FEATURE_LEN;
use mteqa::training::{gradcheck, Worlds};
use mteqa::vocab::TokenVocab;
use mteqa::world::Action;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

fn fixture() -> &'static (Worlds, Dataset) {
    static F: OnceLock<(Worlds, Dataset)> = OnceLock::new();
    F.get_or_init(|| {
        let worlds: Vec<_> = (0..6).map(|i| generate_house(&GenConfig::default(), i).unwrap()).collect();
        let ds = build_dataset(&worlds, &DatasetConfig::default()).unwrap();
        (worlds.into_iter().map(|w| (w.id.clone(), w)).collect(), ds)
    })
}

fn records() -> Vec<&'static QuestionRecord> {
    fixture().1.all().collect()
}

fn small_agent() -> Agent {
    Agent::new(AgentConfig { hidden: 8, embed: 8, attr: 8, head_hidden: 8, seed: 1 })
}

fn n_rooms(r: &QuestionRecord) -> usize {
    r.targets.iter().filter(|t| t.is_room()).count()
}

#[test]
fn oracle_replay_answers_every_question() {
    let (worlds, _) = fixture();
    let recs: Vec<QuestionRecord> = records().into_iter().cloned().collect();
    let mut traces = Vec::new();
    for r in &recs {
        let t = run_episode(&worlds[&r.house_id], r, Driver::Oracle, DEFAULT_BUDGET).unwrap();
        assert_eq!(t.correct, Some(true), "{}", r.id);
        assert!(!t.forced);
        for (leg, view) in t.legs.iter().zip(&r.path.views) {
            assert_eq!(leg.end, view.pose);
            if let Some(iou) = leg.iou {
                assert_eq!(iou.ratio, 1.0);
            }
            if let Some(inside) = leg.inside {
                assert!(inside);
            }
        }
        traces.push(t);
    }
    let m = compute_metrics(&traces, &recs).unwrap();
    assert_eq!(m.pct_overall, 100.0);
    assert_eq!(m.h_t, 1.0);
    assert_eq!(m.pct_r_t, 100.0);
}

#[test]
fn zero_budget_forces_every_select_at_the_spawn() {
    let (worlds, _) = fixture();
    let agent = small_agent();
    for r in records().into_iter().take(12) {
        let t = run_episode(&worlds[&r.house_id], r, Driver::Agent { agent: &agent, sampler: None, rollout: None }, 0)
            .unwrap();
        assert!(t.forced);
        assert!(t.legs.iter().all(|l| l.forced && l.actions == 0));
        assert!(t.legs.iter().all(|l| l.end.cell == r.spawn.pose.cell));
        assert!(t.answer.is_some());
        assert_eq!(t.total_actions, 12 * n_rooms(r));
    }
}

#[test]
fn episode_length_is_bounded_by_budget_and_panoramas() {
    let (worlds, _) = fixture();
    let agent = small_agent();
    for budget in [0, 7, 40] {
        for r in records().into_iter().take(10) {
            let t = run_episode(&worlds[&r.house_id], r, Driver::Agent { agent: &agent, sampler: None, rollout: None }, budget)
                .unwrap();
            assert!(t.total_actions <= budget + 12 * n_rooms(r));
            assert_eq!(t.legs.len(), r.targets.len());
        }
    }
}

#[test]
fn stored_features_follow_the_target_kind() {
    let (worlds, _) = fixture();
    let agent = small_agent();
    for r in records().into_iter().take(15) {
        let t = run_episode(&worlds[&r.house_id], r, Driver::Agent { agent: &agent, sampler: None, rollout: None }, 30)
            .unwrap();
        assert_eq!(t.stored.len(), r.targets.len());
        for (s, target) in t.stored.iter().zip(&r.targets) {
            if target.is_room() {
                assert!(s.hidden.is_none());
                assert_eq!(s.panorama.as_ref().map(Vec::len), Some(PANORAMA_LEN));
            } else {
                assert!(s.panorama.is_none());
                assert_eq!(s.hidden.as_ref().map(Vec::len), Some(agent.config.hidden));
            }
        }
    }
}

#[test]
fn panorama_restores_the_heading() {
    let (worlds, _) = fixture();
    let r = records().into_iter().find(|r| n_rooms(r) > 0).expect("a room question");
    let t = run_episode(&worlds[&r.house_id], r, Driver::Oracle, DEFAULT_BUDGET).unwrap();
    let selects: Vec<usize> = (0..t.steps.len()).filter(|&i| t.steps[i].mv == Move::Select).collect();
    for (i, leg) in selects.iter().zip(&t.legs) {
        if leg.is_room {
            let turns = &t.steps[i + 1..i + 13];
            assert!(turns.iter().all(|s| s.panorama && s.mv == Move::TurnRight));
            assert_eq!(turns[11].pose, t.steps[*i].pose);
        }
    }
}

#[test]
fn greedy_runs_repeat_and_sampled_runs_follow_the_seed() {
    let (worlds, _) = fixture();
    let agent = small_agent();
    let r = records()[0];
    let w = &worlds[&r.house_id];
    let greedy = || run_episode(w, r, Driver::Agent { agent: &agent, sampler: None, rollout: None }, 60).unwrap();
    assert_eq!(greedy(), greedy());
    let sampled = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        run_episode(w, r, Driver::Agent { agent: &agent, sampler: Some(&mut rng), rollout: None }, 60).unwrap()
    };
    assert_eq!(sampled(4), sampled(4));
}

#[test]
fn dense_rewards_telescope_along_the_oracle_path() {
    let (worlds, _) = fixture();
    for r in records().into_iter().take(20) {
        let t = run_episode(&worlds[&r.house_id], r, Driver::Oracle, DEFAULT_BUDGET).unwrap();
        for (i, leg) in t.legs.iter().enumerate() {
            let dense: f64 = t.steps.iter().filter(|s| s.leg == i && s.mv != Move::Select && !s.panorama).map(|s| s.reward).sum();
            assert!((dense - (leg.d_start - leg.d_end)).abs() < 1e-9, "{}", r.id);
        }
    }
}

#[test]
fn scripted_moves_reach_the_same_state_as_the_oracle() {
    let (worlds, _) = fixture();
    let r = records()[1];
    let mut script = Vec::new();
    for leg in &r.path.legs {
        script.extend(leg.iter().map(|a| Move::from(*a)));
        script.push(Move::Select);
    }
    let scripted = run_episode(&worlds[&r.house_id], r, Driver::Scripted(&script), DEFAULT_BUDGET).unwrap();
    let oracle = run_episode(&worlds[&r.house_id], r, Driver::Oracle, DEFAULT_BUDGET).unwrap();
    assert_eq!(scripted.steps, oracle.steps);
    assert_eq!(scripted.legs, oracle.legs);
    assert_eq!(scripted.answer, None);
}

#[test]
fn invalid_programs_are_rejected_before_stepping() {
    let (worlds, _) = fixture();
    let mut r = records()[0].clone();
    r.program.0.pop();
    let err = EpisodeEnv::new(&worlds[&r.house_id], &r, DEFAULT_BUDGET).err().expect("rejected");
    assert!(matches!(err, AgentError::Program(_)));
}

#[test]
fn acting_after_the_episode_fails() {
    let (worlds, _) = fixture();
    let r = records()[0];
    let mut env = EpisodeEnv::new(&worlds[&r.house_id], r, DEFAULT_BUDGET).unwrap();
    env.force_remaining();
    assert!(env.is_done());
    assert!(matches!(env.act(Action::Forward), Err(AgentError::Finished)));
    assert!(matches!(env.select(false), Err(AgentError::Finished)));
}

#[test]
fn zero_parameters_answer_one_half() {
    let cfg = AgentConfig::default();
    let mut head = Cvqa::new(&cfg);
    head.params.data.iter_mut().for_each(|v| *v = 0.0);
    let inputs = vec![vec![0.3; cfg.hidden], vec![-1.0; cfg.hidden]];
    let (p, _) = head.forward(&inputs, &[AttrKind::Color; 2], Comparator::EqualColor).unwrap();
    assert_eq!(p, 0.5);
    let mut seq = SeqVqa::new(&cfg, &TokenVocab::default());
    seq.params.data.iter_mut().for_each(|v| *v = 0.0);
    assert_eq!(seq.forward(&[vec![1.0; FEATURE_LEN]], &[3, 4]).0, 0.5);
}

#[test]
fn identical_sequences_give_identical_answers() {
    let seq = SeqVqa::new(&AgentConfig::default(), &TokenVocab::default());
    let frames = vec![vec![0.2; FEATURE_LEN], vec![0.7; FEATURE_LEN]];
    assert_eq!(seq.forward(&frames, &[1, 2, 3]).0, seq.forward(&frames.clone(), &[1, 2, 3]).0);
}

#[test]
fn arity_mismatch_is_an_error() {
    let cfg = AgentConfig::default();
    let head = Cvqa::new(&cfg);
    let two = vec![vec![0.0; 2], vec![0.0; 2]];
    let err = head.forward(&two, &[AttrKind::Position; 2], Comparator::Closer).unwrap_err();
    assert!(matches!(err, AgentError::Arity { expected: 3, got: 2, .. }));
    let err = head.forward(&[vec![0.0; 3], vec![0.0; 3]], &[AttrKind::Color; 2], Comparator::EqualColor).unwrap_err();
    assert!(matches!(err, AgentError::FeatureLen { .. }));
}

#[test]
fn every_component_passes_finite_differences() {
    for (name, err) in gradcheck::all_errors(11) {
        assert!(err <= 1e-4, "{name}: {err}");
    }
}

#[test]
fn equal_color_is_nearly_symmetric_after_symmetric_training() {
    use mteqa::nn::{bce, Momentum};
    let cfg = AgentConfig { attr: 16, head_hidden: 16, hidden: 6, ..AgentConfig::default() };
    let mut head = Cvqa::new(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    // one-hot colors embedded in the hidden-state slot
    let code = |c: usize| (0..cfg.hidden).map(|i| (i == c) as u8 as f64).collect::<Vec<f64>>();
    let mut data = Vec::new();
    for _ in 0..200 {
        let (a, b) = (rng.gen_range(0..3), rng.gen_range(0..3));
        let b = if rng.gen_bool(0.5) { a } else { b };
        data.push((code(a), code(b), (a == b) as u8 as f64));
        data.push((code(b), code(a), (a == b) as u8 as f64));
    }
    let mut opt = Momentum::new(head.params.len(), 0.05, 0.9);
    let kinds = [AttrKind::Color; 2];
    let mut last = f64::INFINITY;
    for _ in 0..600 {
        let mut g = head.params.zeros();
        let mut loss = 0.0;
        for (a, b, y) in &data {
            let (p, c) = head.forward(&[a.clone(), b.clone()], &kinds, Comparator::EqualColor).unwrap();
            loss += bce(p, *y);
            head.backward(&mut g, &c, p - y);
        }
        g.iter_mut().for_each(|v| *v /= data.len() as f64);
        opt.step(&mut head.params, &g);
        last = loss / data.len() as f64;
    }
    assert!(last < 0.1, "did not fit: {last}");
    for a in 0..3 {
        for b in 0..3 {
            let p1 = head.forward(&[code(a), code(b)], &kinds, Comparator::EqualColor).unwrap().0;
            let p2 = head.forward(&[code(b), code(a)], &kinds, Comparator::EqualColor).unwrap().0;
            assert!((p1 - p2).abs() < 0.05, "{a} {b}: {p1} vs {p2}");
        }
    }
}

#[test]
fn constant_no_baseline_scores_the_no_rate() {
    let recs: Vec<QuestionRecord> = records().into_iter().cloned().collect();
    let mut all_no = recs.clone();
    all_no.iter_mut().for_each(|r| r.answer = Answer::No);
    let mf = MostFrequent::fit(&all_no);
    let acc = recs.iter().filter(|r| mf.predict(r) == r.answer).count() as f64 / recs.len() as f64;
    let no_rate = recs.iter().filter(|r| !r.answer.is_yes()).count() as f64 / recs.len() as f64;
    assert_eq!(acc, no_rate);
    let s = question_only_baselines(&recs, &recs);
    for v in [s.most_frequent, s.bow, s.nearest_neighbor] {
        assert!((0.0..=1.0).contains(&v));
    }
}

#[test]
fn checkpoint_reload_reproduces_evaluation_bitwise() {
    let (worlds, ds) = fixture();
    let mut agent = small_agent();
    agent.round_to_f32();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("agent.bin");
    agent.save(&path).unwrap();
    let back = Agent::load(&path).unwrap();
    assert_eq!(back, agent);
    let recs: Vec<QuestionRecord> = ds.records.test.iter().take(5).cloned().collect();
    let a = mteqa::training::evaluate(&agent, worlds, &recs, 40).unwrap();
    let b = mteqa::training::evaluate(&back, worlds, &recs, 40).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn policies_output_distributions(seed in 0u64..1000, scale in 0.1f64..50.0) {
        let cfg = AgentConfig { hidden: 8, embed: 8, seed, ..AgentConfig::default() };
        let nav = Navigator::new(&cfg, "nav_room");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..Navigator::input_len(&cfg)).map(|_| rng.gen_range(-scale..scale)).collect();
        let h: Vec<f64> = (0..cfg.hidden).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s = nav.step(&x, &h);
        prop_assert_eq!(s.probs.len(), 3);
        prop_assert!((s.probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        prop_assert!(s.probs.iter().all(|p| *p >= 0.0));
    }
}
