//! Acceptance run: one PASS/FAIL line per headline criterion.
//!
//! Exits 0 after printing every line so the workspace test run completes;
//! set `MTEQA_ACCEPTANCE_STRICT=1` to exit 1 when any criterion fails.

mod oracles;

use mteqa::agent::{question_only_baselines, run_episode, Agent, AgentConfig, Driver, SeqVqa, DEFAULT_BUDGET};
use mteqa::dataset::{
    build_dataset, emit_dataset, entropy_bounds, entropy_groups, load_dataset, Dataset, DatasetConfig, QuestionRecord,
};
use mteqa::metrics::{compute_metrics, MetricsReport};
use mteqa::pathfind::{shortest_path, PathError};
use mteqa::procgen::{generate_house, GenConfig};
use mteqa::qa::{
    answer_oracle, compared_targets, decompose, instantiate_questions, parse_question, render_text, spec_of_program,
    QaConfig, QuestionType,
};
use mteqa::training::rewards::{step_reward, terminal_reward, RewardSpec};
use mteqa::training::{
    evaluate, finetune_rl, forced_accuracy, gradcheck, il_loss, prepare_all, seq_vqa_accuracy, train_il,
    train_seq_vqa, IlConfig, LossWeights, RlConfig, SeqConfig, Worlds,
};
use mteqa::world::{deserialize_world, serialize_world, AgentPose, GridPos, Heading, HouseLayout};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeSet, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

// Pinned tolerances and scales.
const ORACLE_HOUSES: u64 = 20;
const ORACLE_TIME: Duration = Duration::from_secs(60);
const ENTROPY_THRESHOLD: f64 = 0.9;
const BOUNDS: (f64, f64) = (0.3160, 0.6840);
const BOUND_TOL: f64 = 1e-4;
const YES_RATE: (f64, f64) = (0.40, 0.60);
const BASELINE_MAX: f64 = 0.60;
const UNFILTERED_BOW_MIN: f64 = 0.65;
const CVQA_MARGIN: f64 = 0.10;
const MIN_QUESTIONS: usize = 300;
const TRAIN_TIME: Duration = Duration::from_secs(600);
const EXACT: f64 = 1e-9;
const GRAD_TOL: f64 = 1e-4;
const BFS_MAPS: usize = 300;

// Learned-agent setup shared by the cVQA, RL and difficulty criteria.
const HOUSES: u64 = 100;
const SPLIT: (f64, f64, f64) = (0.5, 0.1, 0.4);
const SEEDS: [u64; 3] = [0, 1, 2];
const HIDDEN: usize = 32;
const IL_EPOCHS: usize = 20;
const BETA: f64 = 10.0;
const RL_ITERATIONS: usize = 20;
const RL_EVAL_EVERY: usize = 5;

struct Outcome {
    name: &'static str,
    pass: bool,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<String, String>) -> Outcome {
    let (pass, detail) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(d)) => (true, d),
        Ok(Err(d)) => (false, d),
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            (false, format!("panicked: {msg}"))
        }
    };
    println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    Outcome { name, pass }
}

fn ensure(cond: bool, detail: String) -> Result<String, String> {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn houses(n: u64) -> Vec<HouseLayout> {
    (0..n).map(|i| generate_house(&GenConfig::default(), i).expect("generation succeeds")).collect()
}

fn world_map(worlds: &[HouseLayout]) -> Worlds {
    worlds.iter().map(|w| (w.id.clone(), w.clone())).collect()
}

fn oracle_closure() -> Result<String, String> {
    let t = Instant::now();
    let worlds = houses(ORACLE_HOUSES);
    let ds = build_dataset(&worlds, &DatasetConfig::default()).map_err(|e| e.to_string())?;
    let map = world_map(&worlds);
    let test = &ds.records.test;
    let traces = test
        .iter()
        .map(|r| run_episode(&map[&r.house_id], r, Driver::Oracle, DEFAULT_BUDGET))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let m = compute_metrics(&traces, test).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    ensure(
        m.pct_overall == 100.0 && m.h_t == 1.0 && m.pct_r_t == 100.0 && elapsed < ORACLE_TIME && !test.is_empty(),
        format!(
            "{} test questions, overall {:.2}%, h_T {:.3}, %r_T {:.2}, {:.1}s for {ORACLE_HOUSES} houses (limit {}s)",
            test.len(),
            m.pct_overall,
            m.h_t,
            m.pct_r_t,
            elapsed.as_secs_f64(),
            ORACLE_TIME.as_secs()
        ),
    )
}

fn balance(ds: &Dataset) -> Result<String, String> {
    let (lo, hi) = entropy_bounds(ENTROPY_THRESHOLD, BOUND_TOL);
    if (lo - BOUNDS.0).abs() > BOUND_TOL || (hi - BOUNDS.1).abs() > BOUND_TOL {
        return Err(format!("bisection roots ({lo:.4}, {hi:.4}) differ from ({}, {})", BOUNDS.0, BOUNDS.1));
    }
    let all: Vec<QuestionRecord> = ds.all().cloned().collect();
    let mut stats: HashMap<String, (usize, usize)> = HashMap::new();
    for (g, r) in entropy_groups(&all).into_iter().zip(&all) {
        let e = stats.entry(g).or_default();
        e.0 += 1;
        e.1 += r.answer.is_yes() as usize;
    }
    let freqs: Vec<f64> = stats.values().map(|(n, y)| *y as f64 / *n as f64).collect();
    let (fmin, fmax) = freqs.iter().fold((1.0f64, 0.0f64), |(a, b), p| (a.min(*p), b.max(*p)));
    let test = &ds.records.test;
    let yes = test.iter().filter(|r| r.answer.is_yes()).count() as f64 / test.len().max(1) as f64;
    ensure(
        fmin >= BOUNDS.0 && fmax <= BOUNDS.1 && (YES_RATE.0..=YES_RATE.1).contains(&yes),
        format!(
            "{} groups, yes-frequency range [{fmin:.4}, {fmax:.4}] within [{}, {}]; test yes-rate {:.2}% ({} questions)",
            stats.len(),
            BOUNDS.0,
            BOUNDS.1,
            100.0 * yes,
            test.len()
        ),
    )
}

fn baselines(ds: &Dataset, worlds: &[HouseLayout]) -> Result<String, String> {
    let b = question_only_baselines(&ds.records.train, &ds.records.test);
    let cfg = DatasetConfig { entropy_filter: false, split: SPLIT, ..DatasetConfig::default() };
    let biased = build_dataset(worlds, &cfg).map_err(|e| e.to_string())?;
    let u = question_only_baselines(&biased.records.train, &biased.records.test);
    ensure(
        b.most_frequent <= BASELINE_MAX
            && b.bow <= BASELINE_MAX
            && b.nearest_neighbor <= BASELINE_MAX
            && u.bow > UNFILTERED_BOW_MIN,
        format!(
            "balanced: most-frequent {:.2}%, BoW {:.2}%, NN {:.2}% (max {:.0}%); unfiltered BoW {:.2}% (min {:.0}%)",
            100.0 * b.most_frequent,
            100.0 * b.bow,
            100.0 * b.nearest_neighbor,
            100.0 * BASELINE_MAX,
            100.0 * u.bow,
            100.0 * UNFILTERED_BOW_MIN
        ),
    )
}

fn rewards() -> Result<String, String> {
    let spec = RewardSpec::default();
    let cases = [
        ("dense +1.5 m", step_reward(2.0, 0.5), 1.0),
        ("dense -1.7 m", step_reward(0.0, 1.7), -1.0),
        ("dense one cell", step_reward(1.0, 0.81), 0.19),
        ("turn in place", step_reward(1.3, 1.3), 0.0),
        ("object ratio 0.6", terminal_reward(false, 0.6, false), 1.0),
        ("object ratio 0.5", terminal_reward(false, 0.5, false), -1.0),
        ("room inside", spec.room_terminal(true), 0.2),
        ("room outside", spec.room_terminal(false), -0.2),
        (
            "uniform loss",
            il_loss(&[(&[0.5, 0.25, 0.25], 0)], &[(0.5, true)], &[(0.5, true)], LossWeights::default()),
            3.0 * std::f64::consts::LN_2,
        ),
    ];
    let worst = cases.iter().map(|(_, got, want)| (got - want).abs()).fold(0.0, f64::max);
    let bad: Vec<&str> = cases.iter().filter(|(_, g, w)| (g - w).abs() > EXACT).map(|c| c.0).collect();
    ensure(bad.is_empty(), format!("{} cases, worst deviation {worst:.1e} (tol {EXACT:.0e}) {bad:?}", cases.len()))
}

fn random_grid(rng: &mut ChaCha8Rng) -> HouseLayout {
    let (w, h) = (rng.gen_range(3..=8), rng.gen_range(3..=8));
    let walls: Vec<bool> = (0..w * h).map(|_| rng.gen_bool(0.25)).collect();
    oracles::grid(w, h, &walls)
}

fn numerical_integrity() -> Result<String, String> {
    let mut worst = (String::new(), 0.0f64);
    let mut checks = 0;
    for seed in SEEDS {
        for (name, err) in gradcheck::all_errors(seed) {
            checks += 1;
            if err > worst.1 {
                worst = (format!("{name} seed {seed}"), err);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut pairs, mut mismatches) = (0, 0);
    for _ in 0..BFS_MAPS {
        let w = random_grid(&mut rng);
        let free: Vec<GridPos> = w.free_cells().collect();
        if free.is_empty() {
            continue;
        }
        let pick = |rng: &mut ChaCha8Rng| AgentPose {
            cell: free[rng.gen_range(0..free.len())],
            heading: Heading::new(rng.gen_range(0..12)),
        };
        let (from, to) = (pick(&mut rng), pick(&mut rng));
        let oracle = oracles::relaxation_oracle(&w, to);
        let ok = match shortest_path(&w, from, to) {
            Ok(path) => oracle.get(&from) == Some(&(path.len() as u32)),
            Err(PathError::NoPath { .. }) => !oracle.contains_key(&from),
            Err(_) => false,
        };
        pairs += 1;
        mismatches += !ok as usize;
    }
    let mut iou_checks = 0;
    for scene in [oracles::scene_a(), oracles::scene_b()] {
        iou_checks += oracles::check_scene(&scene)?;
    }
    ensure(
        worst.1 <= GRAD_TOL && mismatches == 0,
        format!(
            "{checks} gradient checks, worst {:.2e} ({}) tol {GRAD_TOL:.0e}; BFS {pairs} maps <= 8x8, {mismatches} mismatches; {iou_checks} IOU values equal the per-pixel oracle",
            worst.1, worst.0
        ),
    )
}

fn round_trips(ds: &Dataset, worlds: &[HouseLayout], agent: &Agent, map: &Worlds) -> Result<String, String> {
    let mut types = BTreeSet::new();
    let mut questions = 0;
    for w in &worlds[..12] {
        for c in instantiate_questions(w, &QaConfig::default(), 5).candidates {
            let p = decompose(&c.text).map_err(|e| e.to_string())?;
            let spec = spec_of_program(&p).map_err(|e| e.to_string())?;
            let text = render_text(&parse_question(&c.text).map_err(|e| e.to_string())?);
            let answer = answer_oracle(w, c.spec.comparator, &compared_targets(&p, &c.targets));
            if p != c.program || spec != c.spec || text != c.text || answer != Ok(c.answer) {
                return Err(format!("question round trip broke on {:?}", c.text));
            }
            types.insert(c.spec.qtype);
            questions += 1;
        }
    }
    for w in worlds {
        let back = deserialize_world(&serialize_world(w)).map_err(|e| e.to_string())?;
        if &back != w {
            return Err(format!("world {} changed on round trip", w.id));
        }
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    emit_dataset(ds, dir.path()).map_err(|e| e.to_string())?;
    let same_dataset = &load_dataset(dir.path()).map_err(|e| e.to_string())? == ds;
    let path = dir.path().join("agent.bin");
    agent.save(&path).map_err(|e| e.to_string())?;
    let back = Agent::load(&path).map_err(|e| e.to_string())?;
    let sample = &ds.records.test[..60.min(ds.records.test.len())];
    let (ta, ma) = evaluate(agent, map, sample, DEFAULT_BUDGET).map_err(|e| e.to_string())?;
    let (tb, mb) = evaluate(&back, map, sample, DEFAULT_BUDGET).map_err(|e| e.to_string())?;
    let bitwise = serde_json::to_string(&ma).ok() == serde_json::to_string(&mb).ok() && ta == tb;
    ensure(
        types.len() == QuestionType::ALL.len() && same_dataset && bitwise,
        format!(
            "{questions} questions over {} types decompose and re-render; {} worlds and {} records round-trip: {same_dataset}; checkpoint reload metrics bitwise equal on {} episodes: {bitwise}",
            types.len(),
            worlds.len(),
            ds.all().count(),
            sample.len()
        ),
    )
}

struct SeedRun {
    seed: u64,
    il: MetricsReport,
    rl: MetricsReport,
    selected: usize,
    il_time: Duration,
    cvqa_test: f64,
}

fn pct_or_nan(m: &MetricsReport, bin: &str) -> (f64, usize) {
    let t = m.by_difficulty.iter().find(|(d, _)| format!("{d:?}") == bin).map(|(_, t)| *t);
    match t {
        Some(t) if t.total > 0 => (t.pct(), t.total),
        _ => (f64::NAN, 0),
    }
}

fn main() {
    let start = Instant::now();
    let mut outcomes = Vec::new();
    outcomes.push(check("oracle closure", oracle_closure));

    let worlds = houses(HOUSES);
    let cfg = DatasetConfig { split: SPLIT, ..DatasetConfig::default() };
    let ds = build_dataset(&worlds, &cfg).expect("dataset builds");
    let map = world_map(&worlds);
    println!(
        "# dataset: {HOUSES} houses, split {SPLIT:?}: train {} / val {} / test {} questions",
        ds.records.train.len(),
        ds.records.val.len(),
        ds.records.test.len()
    );
    outcomes.push(check("balance bound", || balance(&ds)));
    outcomes.push(check("question-only weakness", || baselines(&ds, &worlds)));

    let mut runs: Vec<SeedRun> = Vec::new();
    let mut first_agent = None;
    let mut seq_result = None;
    let learned = catch_unwind(AssertUnwindSafe(|| {
        for seed in SEEDS {
            let agent = Agent::new(AgentConfig { hidden: HIDDEN, seed, ..AgentConfig::default() });
            let train = prepare_all(&map, &ds.records.train, &agent).expect("train prepares");
            let test = prepare_all(&map, &ds.records.test, &agent).expect("test prepares");
            let weights = LossWeights { alpha: 1.0, beta: BETA };
            let il_cfg = IlConfig { epochs: IL_EPOCHS, seed, weights, ..IlConfig::default() };
            let t = Instant::now();
            let (il_agent, _) = train_il(&agent, &train, &il_cfg).expect("imitation trains");
            let il_time = t.elapsed();
            let cvqa_test = forced_accuracy(&il_agent, &test, weights).expect("forced eval").answer;
            if seed == SEEDS[0] {
                let t = Instant::now();
                let seq = SeqVqa::new(&agent.config, &agent.vocab);
                let seq_cfg = SeqConfig { epochs: IL_EPOCHS, seed, ..SeqConfig::default() };
                let (seq, _) = train_seq_vqa(&seq, &train, &seq_cfg).expect("seq trains");
                seq_result = Some((seq_vqa_accuracy(&seq, &test), t.elapsed(), train.len()));
            }
            let (_, il) = evaluate(&il_agent, &map, &ds.records.test, DEFAULT_BUDGET).expect("il eval");
            let rl_cfg = RlConfig { iterations: RL_ITERATIONS, eval_every: RL_EVAL_EVERY, seed, ..RlConfig::default() };
            let (rl_agent, report) =
                finetune_rl(&il_agent, &map, &ds.records.train, &ds.records.val, &rl_cfg).expect("rl trains");
            let (_, rl) = evaluate(&rl_agent, &map, &ds.records.test, DEFAULT_BUDGET).expect("rl eval");
            println!(
                "# seed {seed}: forced cVQA {:.2}%; IL d_delta {:.3} h_T {:.3} overall {:.2}%; RL (iteration {}) d_delta {:.3} h_T {:.3} overall {:.2}%",
                100.0 * cvqa_test,
                il.d_delta,
                il.h_t,
                il.pct_overall,
                report.selected,
                rl.d_delta,
                rl.h_t,
                rl.pct_overall
            );
            if first_agent.is_none() {
                first_agent = Some(rl_agent);
            }
            runs.push(SeedRun { seed, il, rl, selected: report.selected, il_time, cvqa_test });
        }
    }));
    let learned_err = learned.err().map(|_| "learned-agent pipeline panicked".to_string());

    outcomes.push(check("cVQA vs seq-VQA on oracle paths", || {
        let (seq_acc, seq_time, n) = seq_result.ok_or_else(|| learned_err.clone().unwrap_or_default())?;
        let run = runs.first().ok_or("no trained agent")?;
        let time = run.il_time + seq_time;
        ensure(
            run.cvqa_test - seq_acc >= CVQA_MARGIN && n >= MIN_QUESTIONS && time <= TRAIN_TIME,
            format!(
                "cVQA {:.2}% vs seq-VQA {:.2}% (margin {:.2} points, need {:.0}); {n} training questions; training {:.0}s (limit {}s)",
                100.0 * run.cvqa_test,
                100.0 * seq_acc,
                100.0 * (run.cvqa_test - seq_acc),
                100.0 * CVQA_MARGIN,
                time.as_secs_f64(),
                TRAIN_TIME.as_secs()
            ),
        )
    }));

    outcomes.push(check("RL improvement ordering", || {
        if runs.len() != SEEDS.len() {
            return Err(learned_err.clone().unwrap_or_default());
        }
        let parts: Vec<String> = runs
            .iter()
            .map(|r| {
                format!(
                    "seed {} (iteration {}): d_delta {:+.4} h_T {:+.4}",
                    r.seed,
                    r.selected,
                    r.rl.d_delta - r.il.d_delta,
                    r.rl.h_t - r.il.h_t
                )
            })
            .collect();
        let ok = runs.iter().all(|r| r.rl.d_delta >= r.il.d_delta && r.rl.h_t >= r.il.h_t);
        ensure(ok, format!("test split changes {}", parts.join("; ")))
    }));

    outcomes.push(check("difficulty ordering", || {
        if runs.len() != SEEDS.len() {
            return Err(learned_err.clone().unwrap_or_default());
        }
        let mut ok = true;
        let parts: Vec<String> = runs
            .iter()
            .map(|r| {
                let (easy, ne) = pct_or_nan(&r.rl, "Easy");
                let (hard, nh) = pct_or_nan(&r.rl, "Hard");
                ok &= easy >= hard;
                format!("seed {}: easy {easy:.2}% (n={ne}) vs hard {hard:.2}% (n={nh})", r.seed)
            })
            .collect();
        ensure(ok, parts.join("; "))
    }));

    outcomes.push(check("reward unit tests exact", rewards));
    outcomes.push(check("numerical integrity", numerical_integrity));
    outcomes.push(check("round-trips", || {
        let agent = first_agent.as_ref().ok_or("no trained agent")?;
        round_trips(&ds, &worlds, agent, &map)
    }));

    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.pass).map(|o| o.name).collect();
    println!(
        "# {} of {} criteria passed in {:.0}s{}",
        outcomes.len() - failed.len(),
        outcomes.len(),
        start.elapsed().as_secs_f64(),
        if failed.is_empty() { String::new() } else { format!("; failed: {}", failed.join(", ")) }
    );
    if !failed.is_empty() && std::env::var("MTEQA_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
