//! Episode engine shared by the native runner and the environment service.

use super::nets::{AttrKind, Controller, Navigator, POSITION_SCALE};
use super::{Agent, AgentError};
use crate::dataset::{Answer, QuestionRecord};
use crate::nn::{argmax, GruCache};
use crate::pathfind::Difficulty;
use crate::qa::QuestionType;
use crate::raycast::{
    extract_features, iou_for_target, target_cues, CueTarget, IouReport, Observation, Renderer, CUE_LEN,
};
use crate::training::rewards::RewardSpec;
use crate::vocab::{object_type_index, room_type_index};
use crate::world::{step, Action, AgentPose, DistanceField, HouseLayout, TargetRef, HEADINGS};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Navigation actions allowed per episode, panorama turns excluded.
pub const DEFAULT_BUDGET: usize = 300;

/// One agent decision: a navigation action or SELECT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Move {
    Forward,
    TurnLeft,
    TurnRight,
    Select,
}

impl Move {
    pub fn name(self) -> &'static str {
        match self {
            Move::Select => "select",
            m => m.action().expect("navigation move").name(),
        }
    }

    pub fn from_name(name: &str) -> Option<Move> {
        if name == "select" {
            return Some(Move::Select);
        }
        Action::from_name(name).map(Move::from)
    }

    pub fn action(self) -> Option<Action> {
        match self {
            Move::Forward => Some(Action::Forward),
            Move::TurnLeft => Some(Action::TurnLeft),
            Move::TurnRight => Some(Action::TurnRight),
            Move::Select => None,
        }
    }
}

impl From<Action> for Move {
    fn from(a: Action) -> Self {
        match a {
            Action::Forward => Move::Forward,
            Action::TurnLeft => Move::TurnLeft,
            Action::TurnRight => Move::TurnRight,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub leg: usize,
    #[serde(rename = "action")]
    pub mv: Move,
    /// Pose after the move.
    pub pose: AgentPose,
    pub collided: bool,
    pub reward: f64,
    /// Turn taken while collecting a room panorama.
    pub panorama: bool,
    /// SELECT imposed by the action budget.
    pub forced: bool,
}

/// Outcome of one navigation sub-program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegTrace {
    pub target: TargetRef,
    pub is_room: bool,
    pub start: AgentPose,
    /// Pose at SELECT.
    pub end: AgentPose,
    /// Navigation actions spent on this leg.
    pub actions: usize,
    pub forced: bool,
    /// Bird-view distance to the target at the start and at SELECT (meters).
    pub d_start: f64,
    pub d_end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iou: Option<IouReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inside: Option<bool>,
}

/// Attribute carrier kept for one completed target.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredFeature {
    pub leg: usize,
    /// Controller hidden state at SELECT (objects only).
    pub hidden: Option<Vec<f64>>,
    /// Concatenated panorama frames (rooms only).
    pub panorama: Option<Vec<f64>>,
    /// Scaled agent position at SELECT.
    pub position: [f64; 2],
}

impl StoredFeature {
    pub fn for_kind(&self, kind: AttrKind) -> Option<Vec<f64>> {
        match kind {
            AttrKind::Color | AttrKind::Size => self.hidden.clone(),
            AttrKind::RoomSize => self.panorama.clone(),
            AttrKind::Position => Some(self.position.to_vec()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub question_id: String,
    pub house_id: String,
    pub qtype: QuestionType,
    pub difficulty: Difficulty,
    pub steps: Vec<TraceStep>,
    pub legs: Vec<LegTrace>,
    /// Actions taken, panorama turns included, SELECTs excluded.
    pub total_actions: usize,
    pub forced: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<Answer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    #[serde(skip)]
    pub stored: Vec<StoredFeature>,
}

/// What the agent perceives at one pose.
#[derive(Debug, Clone, PartialEq)]
pub struct StepObservation {
    pub features: Vec<f64>,
    pub cues: [f64; CUE_LEN],
}

/// Result of a SELECT.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub reward: f64,
    pub panorama: Option<Vec<f64>>,
    pub position: [f64; 2],
}

/// Stepwise state of one question episode.
pub struct EpisodeEnv<'a> {
    world: &'a HouseLayout,
    record: &'a QuestionRecord,
    renderer: Renderer,
    rewards: RewardSpec,
    phrases: Vec<(bool, String)>,
    fields: Vec<DistanceField>,
    budget: usize,
    used: usize,
    pose: AgentPose,
    leg: usize,
    leg_start: AgentPose,
    leg_actions: usize,
    steps: Vec<TraceStep>,
    legs: Vec<LegTrace>,
}

impl<'a> EpisodeEnv<'a> {
    pub fn new(world: &'a HouseLayout, record: &'a QuestionRecord, budget: usize) -> Result<Self, AgentError> {
        record.program.validate().map_err(|e| AgentError::Program(e.to_string()))?;
        let phrases: Vec<(bool, String)> =
            record.program.nav_steps().into_iter().map(|(room, p)| (room, p.to_string())).collect();
        if phrases.len() != record.targets.len() || record.path.views.len() != record.targets.len() {
            return Err(AgentError::Program("targets do not match the navigation steps".into()));
        }
        if !world.pose_is_valid(&record.spawn.pose) {
            return Err(AgentError::Program(format!("spawn {} is not a valid pose", record.spawn.pose)));
        }
        let fields = record.targets.iter().map(|t| DistanceField::new(world, *t)).collect();
        let pose = record.spawn.pose;
        Ok(EpisodeEnv {
            world,
            record,
            renderer: Renderer::default(),
            rewards: RewardSpec::default(),
            phrases,
            fields,
            budget,
            used: 0,
            pose,
            leg: 0,
            leg_start: pose,
            leg_actions: 0,
            steps: Vec::new(),
            legs: Vec::new(),
        })
    }

    pub fn with_rewards(mut self, rewards: RewardSpec) -> Self {
        self.rewards = rewards;
        self
    }

    pub fn world(&self) -> &HouseLayout {
        self.world
    }

    pub fn record(&self) -> &QuestionRecord {
        self.record
    }

    pub fn pose(&self) -> AgentPose {
        self.pose
    }

    pub fn leg(&self) -> usize {
        self.leg
    }

    pub fn n_legs(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_done(&self) -> bool {
        self.leg >= self.phrases.len()
    }

    /// `(is_room, phrase)` of navigation step `i`.
    pub fn nav_step(&self, i: usize) -> (bool, &str) {
        (self.phrases[i].0, self.phrases[i].1.as_str())
    }

    pub fn budget_left(&self) -> usize {
        self.budget.saturating_sub(self.used)
    }

    pub fn steps(&self) -> &[TraceStep] {
        &self.steps
    }

    pub fn legs(&self) -> &[LegTrace] {
        &self.legs
    }

    pub fn render(&self) -> Observation {
        self.renderer.render(self.world, &self.pose)
    }

    fn cue_target(&self) -> Option<CueTarget> {
        let (room, phrase) = self.phrases.get(self.leg)?;
        if *room {
            room_type_index(phrase).map(CueTarget::Room)
        } else {
            object_type_index(phrase).map(CueTarget::Object)
        }
    }

    /// Features of the current view and cues for the current target.
    pub fn observe(&self) -> StepObservation {
        let obs = self.render();
        let cues = self.cue_target().map_or([0.0; CUE_LEN], |t| target_cues(&obs, t));
        StepObservation { features: extract_features(&obs), cues }
    }

    /// Applies a navigation action and returns the dense reward.
    pub fn act(&mut self, action: Action) -> Result<&TraceStep, AgentError> {
        if self.is_done() || self.budget_left() == 0 {
            return Err(AgentError::Finished);
        }
        let field = &self.fields[self.leg];
        let before = field.at(self.pose.cell);
        let out = step(self.world, self.pose, action);
        self.pose = out.pose;
        self.used += 1;
        self.leg_actions += 1;
        let reward = self.rewards.step_reward(before, field.at(self.pose.cell));
        self.steps.push(TraceStep {
            leg: self.leg,
            mv: action.into(),
            pose: self.pose,
            collided: out.collided,
            reward,
            panorama: false,
            forced: false,
        });
        Ok(self.steps.last().expect("just pushed"))
    }

    /// Ends the current navigation step at the current pose; rooms then
    /// collect a panorama of 12 right turns, which restores the heading.
    pub fn select(&mut self, forced: bool) -> Result<Selection, AgentError> {
        if self.is_done() {
            return Err(AgentError::Finished);
        }
        let target = self.record.targets[self.leg];
        let is_room = self.phrases[self.leg].0;
        let (iou, inside, reward) = match target {
            TargetRef::Room(r) => {
                let inside = self.world.room_at(self.pose.cell) == Some(r);
                (None, Some(inside), self.rewards.room_terminal(inside))
            }
            TargetRef::Object(_) => {
                let report = IouReport::new(iou_for_target(&self.render(), target), self.record.path.views[self.leg].iou);
                (Some(report), None, self.rewards.object_terminal(report.ratio))
            }
        };
        let field = &self.fields[self.leg];
        self.legs.push(LegTrace {
            target,
            is_room,
            start: self.leg_start,
            end: self.pose,
            actions: self.leg_actions,
            forced,
            d_start: field.at(self.leg_start.cell),
            d_end: field.at(self.pose.cell),
            iou,
            inside,
        });
        self.steps.push(TraceStep {
            leg: self.leg,
            mv: Move::Select,
            pose: self.pose,
            collided: false,
            reward,
            panorama: false,
            forced,
        });
        let (x, y) = self.pose.position_m();
        let position = [x / POSITION_SCALE, y / POSITION_SCALE];
        let panorama = is_room.then(|| {
            let mut frames = Vec::new();
            for _ in 0..HEADINGS {
                let out = step(self.world, self.pose, Action::TurnRight);
                self.pose = out.pose;
                self.steps.push(TraceStep {
                    leg: self.leg,
                    mv: Move::TurnRight,
                    pose: self.pose,
                    collided: out.collided,
                    reward: 0.0,
                    panorama: true,
                    forced: false,
                });
                frames.extend(extract_features(&self.render()));
            }
            frames
        });
        self.leg += 1;
        self.leg_start = self.pose;
        self.leg_actions = 0;
        Ok(Selection { reward, panorama, position })
    }

    /// Forces SELECT for every remaining target.
    pub fn force_remaining(&mut self) -> Vec<Selection> {
        let mut out = Vec::new();
        while !self.is_done() {
            out.push(self.select(true).expect("not done"));
        }
        out
    }

    /// Applies one decision; once the budget runs out, remaining targets are
    /// force-selected. Returns the index of the first trace step produced.
    pub fn apply(&mut self, mv: Move) -> Result<usize, AgentError> {
        let first = self.steps.len();
        match mv.action() {
            Some(a) => {
                self.act(a)?;
            }
            None => {
                self.select(false)?;
            }
        }
        if !self.is_done() && self.budget_left() == 0 {
            self.force_remaining();
        }
        Ok(first)
    }

    pub fn into_trace(self, answer: Option<(f64, Answer)>, stored: Vec<StoredFeature>) -> EpisodeTrace {
        let total_actions = self.steps.iter().filter(|s| s.mv != Move::Select).count();
        let forced = self.legs.iter().any(|l| l.forced);
        let (probability, answer) = match answer {
            Some((p, a)) => (Some(p), Some(a)),
            None => (None, None),
        };
        EpisodeTrace {
            question_id: self.record.id.clone(),
            house_id: self.record.house_id.clone(),
            qtype: self.record.qtype,
            difficulty: self.record.difficulty,
            steps: self.steps,
            legs: self.legs,
            total_actions,
            forced,
            probability,
            correct: answer.map(|a| a == self.record.answer),
            answer,
            stored,
        }
    }
}

/// Per-step navigator data for policy-gradient updates.
#[derive(Debug, Clone, Default)]
pub struct LegRollout {
    pub is_room: bool,
    pub caches: Vec<GruCache>,
    pub hs: Vec<Vec<f64>>,
    pub probs: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    /// Dense reward of each action; the leg's terminal reward is added to the last.
    pub rewards: Vec<f64>,
}

/// Who decides the moves.
pub enum Driver<'a> {
    /// Shortest-path actions, SELECT at key positions, ground-truth answer.
    Oracle,
    /// A fixed list of moves; SELECT is forced for targets left when it ends.
    Scripted(&'a [Move]),
    /// The learned modules; greedy unless a sampler is given.
    Agent { agent: &'a Agent, sampler: Option<&'a mut ChaCha8Rng>, rollout: Option<&'a mut Vec<LegRollout>> },
}

fn sample(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Runs one question episode end to end with the default rewards.
pub fn run_episode(
    world: &HouseLayout,
    record: &QuestionRecord,
    driver: Driver,
    budget: usize,
) -> Result<EpisodeTrace, AgentError> {
    run_episode_with(world, record, driver, budget, RewardSpec::default())
}

pub fn run_episode_with(
    world: &HouseLayout,
    record: &QuestionRecord,
    driver: Driver,
    budget: usize,
    rewards: RewardSpec,
) -> Result<EpisodeTrace, AgentError> {
    let mut env = EpisodeEnv::new(world, record, budget)?.with_rewards(rewards);
    match driver {
        Driver::Oracle => {
            let mut stored = Vec::new();
            for leg in 0..env.n_legs() {
                let mut forced = false;
                for a in &record.path.legs[leg] {
                    if env.budget_left() == 0 {
                        forced = true;
                        break;
                    }
                    env.act(*a)?;
                }
                let sel = env.select(forced)?;
                stored.push(StoredFeature { leg, hidden: None, panorama: sel.panorama, position: sel.position });
            }
            let p = if record.answer.is_yes() { 1.0 } else { 0.0 };
            Ok(env.into_trace(Some((p, record.answer)), stored))
        }
        Driver::Scripted(moves) => {
            for mv in moves {
                if env.is_done() {
                    break;
                }
                env.apply(*mv)?;
            }
            env.force_remaining();
            Ok(env.into_trace(None, Vec::new()))
        }
        Driver::Agent { agent, mut sampler, mut rollout } => {
            let mut stored = Vec::new();
            for leg in 0..env.n_legs() {
                let (is_room, phrase) = env.nav_step(leg);
                let target = agent.embed_phrase(phrase);
                let nav = agent.navigator(is_room);
                let mut hn = nav.gru.zero_state();
                let mut hc = agent.controller.gru.zero_state();
                let mut prev: Option<Action> = None;
                let mut lr = LegRollout { is_room, ..Default::default() };
                let sel = loop {
                    let obs = env.observe();
                    let xc = Controller::input(&obs.features, &target, &obs.cues, is_room, prev);
                    let cs = agent.controller.step(&xc, &hc);
                    hc = cs.h;
                    if env.budget_left() == 0 {
                        break env.select(true)?;
                    }
                    if cs.p_select > 0.5 {
                        break env.select(false)?;
                    }
                    let xn = Navigator::input(&obs.features, &target, prev, &obs.cues);
                    let ns = nav.step(&xn, &hn);
                    let a = match sampler.as_deref_mut() {
                        Some(rng) => sample(&ns.probs, rng),
                        None => argmax(&ns.probs),
                    };
                    let action = Action::ALL[a];
                    let reward = env.act(action)?.reward;
                    hn = ns.h.clone();
                    if rollout.is_some() {
                        lr.caches.push(ns.cache);
                        lr.hs.push(ns.h);
                        lr.probs.push(ns.probs);
                        lr.actions.push(a);
                        lr.rewards.push(reward);
                    }
                    prev = Some(action);
                };
                if let Some(r) = lr.rewards.last_mut() {
                    *r += sel.reward;
                }
                if let Some(out) = rollout.as_deref_mut() {
                    out.push(lr);
                }
                stored.push(StoredFeature {
                    leg,
                    hidden: (!is_room).then_some(hc),
                    panorama: sel.panorama,
                    position: sel.position,
                });
            }
            let p = answer_probability(agent, record, &stored)?;
            Ok(env.into_trace(Some((p, Answer::from_bool(p > 0.5))), stored))
        }
    }
}

/// Feeds the compared stored features to the VQA head.
pub(crate) fn answer_probability(agent: &Agent, record: &QuestionRecord, stored: &[StoredFeature]) -> Result<f64, AgentError> {
    let queries = record.program.nav_queries();
    let mut inputs = Vec::new();
    let mut kinds = Vec::new();
    for i in record.program.compared_navs() {
        let kind = AttrKind::of(queries[i]);
        let f = stored[i]
            .for_kind(kind)
            .ok_or_else(|| AgentError::Program(format!("navigation step {i} stored no {kind:?} feature")))?;
        inputs.push(f);
        kinds.push(kind);
    }
    Ok(agent.cvqa.forward(&inputs, &kinds, record.comparator)?.0)
}
