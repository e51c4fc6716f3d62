//! Dataset synthesis: instantiate, feasibility filter, entropy filter, split
//! by house, emit JSONL plus a manifest.

use crate::pathfind::{annotate_path, replay, sample_spawn, views_connected, Difficulty, PathAnnotation, SpawnSample};
use crate::qa::{
    answer_oracle, compared_targets, decompose, instantiate_questions, resolve_targets, Candidate, Comparator,
    Program, QaConfig, QuestionType,
};
use crate::raycast::{best_view, BestView, Renderer};
use crate::seeds;
use crate::world::{deserialize_world, HouseLayout, TargetRef, WorldError};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("no questions survived filtering ({0})")]
    Empty(Attrition),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("bad record at {path}:{line}: {message}")]
    Record { path: String, line: usize, message: String },
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("record {id} references unknown house {house}")]
    MissingHouse { id: String, house: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Answer {
    Yes,
    No,
}

impl Answer {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Answer::Yes
        } else {
            Answer::No
        }
    }

    pub fn is_yes(self) -> bool {
        self == Answer::Yes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    pub house_id: String,
    pub text: String,
    pub qtype: QuestionType,
    pub comparator: Comparator,
    pub program: Program,
    /// One target per navigation step of the program.
    pub targets: Vec<TargetRef>,
    pub answer: Answer,
    pub path: PathAnnotation,
    pub spawn: SpawnSample,
    pub difficulty: Difficulty,
}

impl QuestionRecord {
    /// Entities consumed by the comparison, in mention order.
    pub fn compared(&self) -> Vec<TargetRef> {
        compared_targets(&self.program, &self.targets)
    }
}

/// Something the entropy filter can group.
pub trait Balanced {
    fn text(&self) -> &str;
    /// Question type, comparator and the sorted argument types.
    fn balance_key(&self) -> String;
    fn is_yes(&self) -> bool;
}

fn balance_key_of(qtype: QuestionType, comparator: Comparator, program: &Program) -> String {
    let mut phrases: Vec<&str> = match qtype {
        QuestionType::RoomSizeCompare => program.nav_steps().into_iter().filter(|(r, _)| *r).map(|(_, p)| p).collect(),
        _ => program.nav_steps().into_iter().filter(|(r, _)| !*r).map(|(_, p)| p).collect(),
    };
    phrases.sort();
    format!("{}|{:?}|{}", qtype.name(), comparator, phrases.join(","))
}

impl Balanced for QuestionRecord {
    fn text(&self) -> &str {
        &self.text
    }
    fn balance_key(&self) -> String {
        balance_key_of(self.qtype, self.comparator, &self.program)
    }
    fn is_yes(&self) -> bool {
        self.answer.is_yes()
    }
}

impl Balanced for Candidate {
    fn text(&self) -> &str {
        &self.text
    }
    fn balance_key(&self) -> String {
        balance_key_of(self.spec.qtype, self.spec.comparator, &self.program)
    }
    fn is_yes(&self) -> bool {
        self.answer
    }
}

/// Binary entropy in bits.
pub fn h2(p: f64) -> f64 {
    let term = |q: f64| if q <= 0.0 { 0.0 } else { -q * q.log2() };
    term(p) + term(1.0 - p)
}

/// Roots `(lo, hi)` of `h2(p) = threshold` by bisection.
pub fn entropy_bounds(threshold: f64, tol: f64) -> (f64, f64) {
    let (mut a, mut b) = (0.0, 0.5);
    while b - a > tol {
        let m = 0.5 * (a + b);
        if h2(m) < threshold {
            a = m;
        } else {
            b = m;
        }
    }
    let lo = 0.5 * (a + b);
    (lo, 1.0 - lo)
}

/// Effective group of every item: its exact text when that text occurs at
/// least twice, otherwise its balance key among the other singletons.
pub fn entropy_groups<T: Balanced>(items: &[T]) -> Vec<String> {
    let mut text_count: HashMap<&str, usize> = HashMap::new();
    for it in items {
        *text_count.entry(it.text()).or_default() += 1;
    }
    items
        .iter()
        .map(|it| {
            if text_count[it.text()] >= 2 {
                format!("text:{}", it.text())
            } else {
                format!("key:{}", it.balance_key())
            }
        })
        .collect()
}

/// Keeps the items whose group's answer entropy is at least `threshold`.
pub fn entropy_filter<T: Balanced + Clone>(items: &[T], threshold: f64) -> Vec<T> {
    let groups = entropy_groups(items);
    let mut stats: HashMap<&str, (usize, usize)> = HashMap::new();
    for (g, it) in groups.iter().zip(items) {
        let e = stats.entry(g.as_str()).or_default();
        e.0 += 1;
        e.1 += it.is_yes() as usize;
    }
    items
        .iter()
        .zip(&groups)
        .filter(|(_, g)| {
            let (n, y) = stats[g.as_str()];
            h2(y as f64 / n as f64) >= threshold
        })
        .map(|(it, _)| it.clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub seed: u64,
    pub qa: QaConfig,
    pub view_samples: usize,
    pub entropy_threshold: f64,
    /// Disabling the entropy filter yields a deliberately biased dataset.
    pub entropy_filter: bool,
    pub split: (f64, f64, f64),
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            seed: 0,
            qa: QaConfig::default(),
            view_samples: 100,
            entropy_threshold: 0.9,
            entropy_filter: true,
            split: (0.7, 0.15, 0.15),
        }
    }
}

impl DatasetConfig {
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attrition {
    pub instantiated: usize,
    pub tie_dropped: usize,
    pub feasibility_dropped: usize,
    pub entropy_dropped: usize,
    pub kept: usize,
}

impl std::fmt::Display for Attrition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "instantiated {}, ties {}, infeasible {}, entropy {}, kept {}",
            self.instantiated, self.tie_dropped, self.feasibility_dropped, self.entropy_dropped, self.kept
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Splits<T> {
    pub train: T,
    pub val: T,
    pub test: T,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TypeStats {
    pub count: usize,
    pub yes: usize,
    pub yes_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema: u32,
    pub config_hash: String,
    pub config: DatasetConfig,
    pub houses: Splits<Vec<String>>,
    /// Per split, per question type.
    pub stats: Splits<BTreeMap<String, TypeStats>>,
    pub attrition: Attrition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub records: Splits<Vec<QuestionRecord>>,
}

impl Dataset {
    pub fn all(&self) -> impl Iterator<Item = &QuestionRecord> {
        self.records.train.iter().chain(&self.records.val).chain(&self.records.test)
    }
}

/// Per-house cache of best views.
pub struct ViewCache<'a> {
    world: &'a HouseLayout,
    renderer: Renderer,
    samples: usize,
    seed: u64,
    views: HashMap<TargetRef, Option<BestView>>,
}

impl<'a> ViewCache<'a> {
    pub fn new(world: &'a HouseLayout, samples: usize, seed: u64) -> Self {
        ViewCache { world, renderer: Renderer::default(), samples, seed, views: HashMap::new() }
    }

    pub fn get(&mut self, target: TargetRef) -> Option<BestView> {
        let (world, renderer, samples) = (self.world, &self.renderer, self.samples);
        let id_seed = seeds::derive(&[self.seed, seeds::of_str(&world.id), target_code(target)]);
        *self
            .views
            .entry(target)
            .or_insert_with(|| best_view(world, renderer, target, samples, id_seed).ok())
    }
}

fn target_code(t: TargetRef) -> u64 {
    match t {
        TargetRef::Room(r) => r as u64,
        TargetRef::Object(o) => (1 << 32) | o as u64,
    }
}

/// Attaches best views, a spawn and a path annotation; `None` when infeasible.
pub fn annotate_candidate(
    world: &HouseLayout,
    cache: &mut ViewCache,
    cand: &Candidate,
    id: String,
    seed: u64,
) -> Option<QuestionRecord> {
    let mut views = Vec::with_capacity(cand.targets.len());
    for t in &cand.targets {
        views.push(cache.get(*t)?);
    }
    views_connected(world, &cand.targets, &views).ok()?;
    let spawn = sample_spawn(world, &views, seed).ok()?;
    let path = annotate_path(world, spawn.pose, &cand.targets, &views).ok()?;
    Some(QuestionRecord {
        id,
        house_id: world.id.clone(),
        text: cand.text.clone(),
        qtype: cand.spec.qtype,
        comparator: cand.spec.comparator,
        program: cand.program.clone(),
        targets: cand.targets.clone(),
        answer: Answer::from_bool(cand.answer),
        difficulty: path.difficulty(),
        path,
        spawn,
    })
}

/// Instantiates and feasibility-filters one house.
pub fn house_records(world: &HouseLayout, cfg: &DatasetConfig) -> (Vec<QuestionRecord>, Attrition) {
    let house_seed = seeds::derive(&[cfg.seed, seeds::of_str(&world.id)]);
    let inst = instantiate_questions(world, &cfg.qa, house_seed);
    let mut cache = ViewCache::new(world, cfg.view_samples, cfg.seed);
    let mut out = Vec::new();
    let mut att = Attrition { instantiated: inst.candidates.len() + inst.ties, tie_dropped: inst.ties, ..Default::default() };
    for (i, cand) in inst.candidates.iter().enumerate() {
        let id = format!("{}-q{:04}", world.id, i);
        match annotate_candidate(world, &mut cache, cand, id, seeds::derive(&[house_seed, i as u64])) {
            Some(r) => out.push(r),
            None => att.feasibility_dropped += 1,
        }
    }
    (out, att)
}

/// Keeps records whose best views exist and are mutually reachable.
pub fn feasibility_filter(world: &HouseLayout, records: Vec<QuestionRecord>) -> Vec<QuestionRecord> {
    records.into_iter().filter(|r| verify_record(world, r).is_ok()).collect()
}

/// Re-checks every invariant of a record against its house.
pub fn verify_record(world: &HouseLayout, r: &QuestionRecord) -> Result<(), String> {
    r.program.validate().map_err(|e| e.to_string())?;
    let program = decompose(&r.text).map_err(|e| e.to_string())?;
    if program != r.program {
        return Err(format!("text decomposes to {program}, record has {}", r.program));
    }
    let targets = resolve_targets(world, &r.program).map_err(|e| e.to_string())?;
    if targets != r.targets {
        return Err("targets do not resolve to the recorded ids".into());
    }
    let answer = answer_oracle(world, r.comparator, &r.compared()).map_err(|e| e.to_string())?;
    if Answer::from_bool(answer) != r.answer {
        return Err("answer disagrees with the oracle".into());
    }
    if r.path.targets != r.targets || r.path.legs.len() != r.targets.len() {
        return Err("path legs do not match the targets".into());
    }
    let (poses, collisions) = replay(world, r.spawn.pose, &r.path.actions());
    if collisions > 0 {
        return Err(format!("path replay collides {collisions} times"));
    }
    for (k, view) in r.path.key_positions.iter().zip(&r.path.views) {
        if poses.get(*k) != Some(&view.pose) {
            return Err(format!("key position {k} is not the best view"));
        }
    }
    if r.path.total_actions != poses.len() - 1 || r.difficulty != r.path.difficulty() {
        return Err("action count mismatch".into());
    }
    Ok(())
}

/// Shuffles house ids and cuts them into train / val / test.
pub fn split_houses(ids: &[String], fractions: (f64, f64, f64), seed: u64) -> Splits<Vec<String>> {
    let mut ids = ids.to_vec();
    ids.sort();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seeds::derive(&[seed, 0x5911])));
    let total = fractions.0 + fractions.1 + fractions.2;
    let n = ids.len();
    let n_train = ((fractions.0 / total) * n as f64).round() as usize;
    let n_val = (((fractions.1 / total) * n as f64).round() as usize).min(n - n_train);
    let mut train = ids[..n_train].to_vec();
    let mut val = ids[n_train..n_train + n_val].to_vec();
    let mut test = ids[n_train + n_val..].to_vec();
    train.sort();
    val.sort();
    test.sort();
    Splits { train, val, test }
}

fn type_stats(records: &[QuestionRecord]) -> BTreeMap<String, TypeStats> {
    let mut out: BTreeMap<String, TypeStats> = BTreeMap::new();
    for r in records {
        let s = out.entry(r.qtype.name().to_string()).or_default();
        s.count += 1;
        s.yes += r.answer.is_yes() as usize;
    }
    for s in out.values_mut() {
        s.yes_rate = s.yes as f64 / s.count as f64;
    }
    out
}

/// Runs the whole pipeline over `worlds`.
pub fn build_dataset(worlds: &[HouseLayout], cfg: &DatasetConfig) -> Result<Dataset, DatasetError> {
    let mut attrition = Attrition::default();
    let mut feasible = Vec::new();
    for world in worlds {
        let (records, att) = house_records(world, cfg);
        attrition.instantiated += att.instantiated;
        attrition.tie_dropped += att.tie_dropped;
        attrition.feasibility_dropped += att.feasibility_dropped;
        feasible.extend(records);
    }
    let kept =
        if cfg.entropy_filter { entropy_filter(&feasible, cfg.entropy_threshold) } else { feasible.clone() };
    attrition.entropy_dropped = feasible.len() - kept.len();
    attrition.kept = kept.len();
    if kept.is_empty() {
        return Err(DatasetError::Empty(attrition));
    }
    let ids: Vec<String> = worlds.iter().map(|w| w.id.clone()).collect();
    let houses = split_houses(&ids, cfg.split, cfg.seed);
    let pick = |split: &[String]| -> Vec<QuestionRecord> {
        kept.iter().filter(|r| split.contains(&r.house_id)).cloned().collect()
    };
    let records = Splits { train: pick(&houses.train), val: pick(&houses.val), test: pick(&houses.test) };
    let stats = Splits {
        train: type_stats(&records.train),
        val: type_stats(&records.val),
        test: type_stats(&records.test),
    };
    let manifest =
        DatasetManifest { schema: 1, config_hash: cfg.hash(), config: cfg.clone(), houses, stats, attrition };
    Ok(Dataset { manifest, records })
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), DatasetError> {
    let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(io_err(path))?);
    for it in items {
        let line = serde_json::to_string(it).expect("record serializes");
        writeln!(f, "{line}").map_err(io_err(path))?;
    }
    f.flush().map_err(io_err(path))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, DatasetError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| DatasetError::Record {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Writes `train.jsonl`, `val.jsonl`, `test.jsonl` and `manifest.json`.
pub fn emit_dataset(dataset: &Dataset, dir: &Path) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_jsonl(&dir.join("train.jsonl"), &dataset.records.train)?;
    write_jsonl(&dir.join("val.jsonl"), &dataset.records.val)?;
    write_jsonl(&dir.join("test.jsonl"), &dataset.records.test)?;
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&dataset.manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(io_err(&path))
}

pub fn load_dataset(dir: &Path) -> Result<Dataset, DatasetError> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| DatasetError::Record {
        path: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let records = Splits {
        train: read_jsonl(&dir.join("train.jsonl"))?,
        val: read_jsonl(&dir.join("val.jsonl"))?,
        test: read_jsonl(&dir.join("test.jsonl"))?,
    };
    Ok(Dataset { manifest, records })
}

/// Loads every `*.json` world document in `dir`, keyed by house id.
pub fn load_worlds(dir: &Path) -> Result<BTreeMap<String, HouseLayout>, DatasetError> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut out = BTreeMap::new();
    for p in paths {
        let text = fs::read_to_string(&p).map_err(io_err(&p))?;
        let world = deserialize_world(&text)?;
        out.insert(world.id.clone(), world);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone, Debug, PartialEq)]
    struct Item(&'static str, &'static str, bool);

    impl Balanced for Item {
        fn text(&self) -> &str {
            self.0
        }
        fn balance_key(&self) -> String {
            self.1.to_string()
        }
        fn is_yes(&self) -> bool {
            self.2
        }
    }

    #[test]
    fn entropy_values() {
        assert_eq!(h2(0.5), 1.0);
        assert!((h2(0.2) - 0.7219).abs() < 1e-4);
        let (lo, hi) = entropy_bounds(0.9, 1e-9);
        assert!((lo - 0.3160).abs() < 1e-4 && (hi - 0.6840).abs() < 1e-4, "{lo} {hi}");
    }

    #[test]
    fn balanced_group_kept_skewed_dropped() {
        let items = vec![
            Item("a", "k", true),
            Item("a", "k", false),
            Item("b", "k", true),
            Item("b", "k", true),
            Item("b", "k", true),
            Item("b", "k", true),
            Item("b", "k", false),
        ];
        let kept = entropy_filter(&items, 0.9);
        assert_eq!(kept, items[..2].to_vec());
    }

    #[test]
    fn singletons_fall_back_to_key_groups() {
        let items = vec![Item("x", "k1", true), Item("y", "k1", false), Item("z", "k2", true)];
        let kept = entropy_filter(&items, 0.9);
        assert_eq!(kept, items[..2].to_vec());
        assert_eq!(entropy_filter(&kept, 0.9), kept);
    }

    #[test]
    fn split_fractions() {
        let ids: Vec<String> = (0..20).map(|i| format!("h{i:02}")).collect();
        let s = split_houses(&ids, (0.7, 0.15, 0.15), 3);
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (14, 3, 3));
        let mut all: Vec<String> = s.train.iter().chain(&s.val).chain(&s.test).cloned().collect();
        all.sort();
        assert_eq!(all, ids);
    }
}
