//! Shortest paths in `(cell, heading)` pose space, path annotations for
//! questions, spawn sampling and difficulty bins.

use crate::raycast::BestView;
use crate::world::{move_allowed, step, Action, AgentPose, GridPos, Heading, HouseLayout, TargetRef, HEADINGS};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

/// Spawn distance from the reference target's best view, in actions.
pub const SPAWN_ACTIONS: u32 = 10;
/// Accepted spawn distances when no pose lies exactly [`SPAWN_ACTIONS`] away.
pub const SPAWN_RELAXED: (u32, u32) = (8, 12);

#[derive(Debug, Error, PartialEq)]
pub enum PathError {
    #[error("no path from {from} to {to}")]
    NoPath { from: AgentPose, to: AgentPose },
    #[error("invalid pose {0}")]
    InvalidPose(AgentPose),
    #[error("infeasible question: leg {leg} ({target:?}) is unreachable")]
    Infeasible { leg: usize, target: TargetRef },
    #[error("no spawn pose within {min}..={max} actions of the reference view")]
    NoSpawn { min: u32, max: u32 },
}

const N_ACTIONS: usize = 3;

fn state(world: &HouseLayout, pose: &AgentPose) -> usize {
    ((pose.cell.y * world.width + pose.cell.x) as usize) * HEADINGS as usize + pose.heading.index() as usize
}

fn pose_of(world: &HouseLayout, s: usize) -> AgentPose {
    let cell = (s / HEADINGS as usize) as i32;
    AgentPose {
        cell: GridPos::new(cell % world.width, cell / world.width),
        heading: Heading::new((s % HEADINGS as usize) as u8),
    }
}

fn n_states(world: &HouseLayout) -> usize {
    (world.width * world.height) as usize * HEADINGS as usize
}

/// Minimum-length action sequence from `from` to `to` by breadth-first search.
///
/// Ties between equally short paths resolve in `Action::ALL` order.
pub fn shortest_path(world: &HouseLayout, from: AgentPose, to: AgentPose) -> Result<Vec<Action>, PathError> {
    for p in [from, to] {
        if !world.pose_is_valid(&p) {
            return Err(PathError::InvalidPose(p));
        }
    }
    if from == to {
        return Ok(Vec::new());
    }
    let n = n_states(world);
    let mut parent: Vec<Option<(usize, Action)>> = vec![None; n];
    let start = state(world, &from);
    let goal = state(world, &to);
    let mut seen = vec![false; n];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(s) = queue.pop_front() {
        let pose = pose_of(world, s);
        for a in Action::ALL {
            let out = step(world, pose, a);
            if out.collided {
                continue;
            }
            let t = state(world, &out.pose);
            if seen[t] {
                continue;
            }
            seen[t] = true;
            parent[t] = Some((s, a));
            if t == goal {
                let mut path = Vec::new();
                let mut cur = goal;
                while let Some((prev, a)) = parent[cur] {
                    path.push(a);
                    cur = prev;
                }
                path.reverse();
                return Ok(path);
            }
            queue.push_back(t);
        }
    }
    Err(PathError::NoPath { from, to })
}

/// Action distance from every pose to one goal pose (reverse breadth-first search).
#[derive(Debug, Clone)]
pub struct ActionDistances {
    width: i32,
    height: i32,
    dist: Vec<u32>,
}

impl ActionDistances {
    pub fn to_goal(world: &HouseLayout, goal: AgentPose) -> Self {
        let n = n_states(world);
        let mut dist = vec![u32::MAX; n];
        if world.pose_is_valid(&goal) {
            let g = state(world, &goal);
            dist[g] = 0;
            let mut queue = VecDeque::from([g]);
            while let Some(s) = queue.pop_front() {
                let pose = pose_of(world, s);
                let d = dist[s];
                let mut preds = [None; N_ACTIONS];
                // a TurnLeft into `pose` starts from the heading to its right, and vice versa
                preds[0] = Some(AgentPose { heading: pose.heading.right(), ..pose });
                preds[1] = Some(AgentPose { heading: pose.heading.left(), ..pose });
                let (dx, dy) = pose.heading.forward_offset();
                let back = pose.cell.offset(-dx, -dy);
                if move_allowed(world, back, dx, dy) && world.is_free(back) {
                    preds[2] = Some(AgentPose { cell: back, ..pose });
                }
                for p in preds.into_iter().flatten() {
                    let t = state(world, &p);
                    if dist[t] == u32::MAX {
                        dist[t] = d + 1;
                        queue.push_back(t);
                    }
                }
            }
        }
        ActionDistances { width: world.width, height: world.height, dist }
    }

    pub fn at(&self, pose: &AgentPose) -> Option<u32> {
        let c = pose.cell;
        if c.x < 0 || c.y < 0 || c.x >= self.width || c.y >= self.height {
            return None;
        }
        let s = ((c.y * self.width + c.x) as usize) * HEADINGS as usize + pose.heading.index() as usize;
        Some(self.dist[s]).filter(|d| *d != u32::MAX)
    }

    /// All poses at exactly `d` actions, in state order.
    pub fn poses_at(&self, d: u32) -> Vec<AgentPose> {
        let cells = (self.width * self.height) as usize;
        (0..cells * HEADINGS as usize)
            .filter(|&s| self.dist[s] == d)
            .map(|s| {
                let cell = (s / HEADINGS as usize) as i32;
                AgentPose {
                    cell: GridPos::new(cell % self.width, cell / self.width),
                    heading: Heading::new((s % HEADINGS as usize) as u8),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    pub fn name(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        }
    }
}

/// Fewer than 25 actions is easy, 25 to 70 medium, more than 70 hard.
pub fn difficulty(total_actions: usize) -> Difficulty {
    match total_actions {
        0..=24 => Difficulty::Easy,
        25..=70 => Difficulty::Medium,
        _ => Difficulty::Hard,
    }
}

/// Ground-truth navigation for one question: a leg per navigation target, in
/// program order, each ending at the target's best view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathAnnotation {
    pub targets: Vec<TargetRef>,
    pub legs: Vec<Vec<Action>>,
    /// Best-view pose and IOU at the end of each leg.
    pub views: Vec<BestView>,
    pub total_actions: usize,
    /// Number of actions taken when each leg's best view is reached.
    pub key_positions: Vec<usize>,
}

impl PathAnnotation {
    pub fn actions(&self) -> Vec<Action> {
        self.legs.iter().flatten().copied().collect()
    }

    pub fn difficulty(&self) -> Difficulty {
        difficulty(self.total_actions)
    }
}

/// Chains shortest paths from `spawn` through each target's best view.
pub fn annotate_path(
    world: &HouseLayout,
    spawn: AgentPose,
    targets: &[TargetRef],
    views: &[BestView],
) -> Result<PathAnnotation, PathError> {
    assert_eq!(targets.len(), views.len(), "one best view per target");
    let mut legs = Vec::with_capacity(targets.len());
    let mut key_positions = Vec::with_capacity(targets.len());
    let mut at = spawn;
    let mut total = 0;
    for (leg, (target, view)) in targets.iter().zip(views).enumerate() {
        let actions = shortest_path(world, at, view.pose)
            .map_err(|_| PathError::Infeasible { leg, target: *target })?;
        total += actions.len();
        key_positions.push(total);
        legs.push(actions);
        at = view.pose;
    }
    Ok(PathAnnotation { targets: targets.to_vec(), legs, views: views.to_vec(), total_actions: total, key_positions })
}

/// Checks that consecutive best views are mutually reachable.
pub fn views_connected(world: &HouseLayout, targets: &[TargetRef], views: &[BestView]) -> Result<(), PathError> {
    for (leg, pair) in views.windows(2).enumerate() {
        shortest_path(world, pair[0].pose, pair[1].pose)
            .map_err(|_| PathError::Infeasible { leg: leg + 1, target: targets[leg + 1] })?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpawnSample {
    pub pose: AgentPose,
    /// Index into the mentioned targets of the reference target.
    pub reference: usize,
    /// Action distance from the spawn to the reference best view.
    pub actions: u32,
    /// True when no pose was exactly [`SPAWN_ACTIONS`] away.
    pub relaxed: bool,
}

/// Picks a reference target uniformly, then a pose uniformly among those
/// exactly [`SPAWN_ACTIONS`] actions from its best view (falling back to the
/// nearest achievable distance in [`SPAWN_RELAXED`]).
pub fn sample_spawn(world: &HouseLayout, views: &[BestView], seed: u64) -> Result<SpawnSample, PathError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reference = rng.gen_range(0..views.len());
    let field = ActionDistances::to_goal(world, views[reference].pose);
    let mut order: Vec<u32> = (SPAWN_RELAXED.0..=SPAWN_RELAXED.1).collect();
    order.sort_by_key(|d| (d.abs_diff(SPAWN_ACTIONS), *d));
    for d in order {
        let poses = field.poses_at(d);
        if let Some(pose) = poses.choose(&mut rng) {
            return Ok(SpawnSample { pose: *pose, reference, actions: d, relaxed: d != SPAWN_ACTIONS });
        }
    }
    Err(PathError::NoSpawn { min: SPAWN_RELAXED.0, max: SPAWN_RELAXED.1 })
}

/// Replays `actions` from `spawn`, returning every pose (spawn included) and
/// the number of collisions.
pub fn replay(world: &HouseLayout, spawn: AgentPose, actions: &[Action]) -> (Vec<AgentPose>, usize) {
    let mut poses = vec![spawn];
    let mut collisions = 0;
    let mut pose = spawn;
    for a in actions {
        let out = step(world, pose, *a);
        collisions += out.collided as usize;
        pose = out.pose;
        poses.push(pose);
    }
    (poses, collisions)
}
