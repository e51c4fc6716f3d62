//! House layouts, agent kinematics and collision rules.
//!
//! The world is a grid of square cells [`CELL_SIZE`] meters wide. Agents sit
//! at cell centers and face one of twelve headings 30 degrees apart. A forward
//! move advances one cell towards the 8-neighbour closest to the heading.

mod distance;
mod document;

pub use distance::{bird_view_distance, DistanceField};
pub use document::{deserialize_world, serialize_world, WorldDocument, WORLD_SCHEMA};

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Edge length of one grid cell, in meters. One forward action moves one cell.
pub const CELL_SIZE: f64 = 0.19;

/// Number of discrete headings; one turn action rotates by `360 / HEADINGS` degrees.
pub const HEADINGS: u8 = 12;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("malformed world document at `{field}`: {message}")]
    Parse { field: String, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellKind {
    Wall,
    Floor,
    Door,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridPos {
    pub x: i32,
    pub y: i32,
}

impl GridPos {
    pub const fn new(x: i32, y: i32) -> Self {
        GridPos { x, y }
    }

    pub fn offset(self, dx: i32, dy: i32) -> Self {
        GridPos::new(self.x + dx, self.y + dy)
    }

    /// Center of the cell in meters.
    pub fn center_m(self) -> (f64, f64) {
        ((self.x as f64 + 0.5) * CELL_SIZE, (self.y as f64 + 0.5) * CELL_SIZE)
    }
}

/// Axis-aligned cell rectangle `[x, x + w) x [y, y + h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: i32,
    pub y: i32,
    pub w: i32,
    pub h: i32,
}

impl Rect {
    pub const fn new(x: i32, y: i32, w: i32, h: i32) -> Self {
        Rect { x, y, w, h }
    }

    pub fn area(&self) -> usize {
        (self.w.max(0) * self.h.max(0)) as usize
    }

    pub fn contains(&self, p: GridPos) -> bool {
        p.x >= self.x && p.x < self.x + self.w && p.y >= self.y && p.y < self.y + self.h
    }

    pub fn cells(&self) -> impl Iterator<Item = GridPos> + '_ {
        (self.y..self.y + self.h).flat_map(move |y| (self.x..self.x + self.w).map(move |x| GridPos::new(x, y)))
    }

    /// Grows the rectangle by `n` cells on every side.
    pub fn inflate(&self, n: i32) -> Rect {
        Rect::new(self.x - n, self.y - n, self.w + 2 * n, self.h + 2 * n)
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.x < other.x + other.w
            && other.x < self.x + self.w
            && self.y < other.y + other.h
            && other.y < self.y + self.h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub id: usize,
    pub room_type: String,
    /// Floor rectangle; door cells sit in the surrounding walls.
    pub rect: Rect,
}

impl Room {
    pub fn floor_area(&self) -> usize {
        self.rect.area()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub id: usize,
    pub object_type: String,
    pub color: String,
    /// Room the object was placed in.
    pub room: usize,
    pub footprint: Rect,
    /// Height in cells, 1..=3.
    pub height: u32,
}

impl ObjectInstance {
    pub fn size_volume(&self) -> usize {
        self.footprint.area() * self.height as usize
    }

    /// Footprint center in meters.
    pub fn center(&self) -> (f64, f64) {
        let f = &self.footprint;
        (
            (f.x as f64 + f.w as f64 / 2.0) * CELL_SIZE,
            (f.y as f64 + f.h as f64 / 2.0) * CELL_SIZE,
        )
    }
}

/// A navigation target: one room or one object of a house.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum TargetRef {
    Room(usize),
    Object(usize),
}

impl TargetRef {
    pub fn is_room(&self) -> bool {
        matches!(self, TargetRef::Room(_))
    }
}

/// Immutable house description plus derived per-cell lookup tables.
#[derive(Debug, Clone, PartialEq)]
pub struct HouseLayout {
    pub id: String,
    pub width: i32,
    pub height: i32,
    cells: Vec<CellKind>,
    pub rooms: Vec<Room>,
    pub objects: Vec<ObjectInstance>,
    room_of: Vec<Option<usize>>,
    object_of: Vec<Option<usize>>,
}

impl HouseLayout {
    /// Builds lookup tables; does not validate (see `procgen::validate_house`).
    pub fn new(
        id: impl Into<String>,
        width: i32,
        height: i32,
        cells: Vec<CellKind>,
        rooms: Vec<Room>,
        objects: Vec<ObjectInstance>,
    ) -> Self {
        assert_eq!(cells.len(), (width * height) as usize, "cell grid size mismatch");
        let n = cells.len();
        let mut room_of = vec![None; n];
        let mut object_of = vec![None; n];
        for (ri, room) in rooms.iter().enumerate() {
            for p in room.rect.cells() {
                if let Some(i) = index_of(width, height, p) {
                    room_of[i] = Some(ri);
                }
            }
        }
        for (oi, obj) in objects.iter().enumerate() {
            for p in obj.footprint.cells() {
                if let Some(i) = index_of(width, height, p) {
                    object_of[i] = Some(oi);
                }
            }
        }
        HouseLayout { id: id.into(), width, height, cells, rooms, objects, room_of, object_of }
    }

    /// Parses a picture of the grid: `#` wall, `.` floor, `D` door.
    pub fn from_ascii(
        id: impl Into<String>,
        rows: &[&str],
        rooms: Vec<Room>,
        objects: Vec<ObjectInstance>,
    ) -> Self {
        let height = rows.len() as i32;
        let width = rows.first().map_or(0, |r| r.len()) as i32;
        let cells = rows
            .iter()
            .flat_map(|r| r.chars())
            .map(|c| match c {
                '#' => CellKind::Wall,
                'D' => CellKind::Door,
                _ => CellKind::Floor,
            })
            .collect();
        HouseLayout::new(id, width, height, cells, rooms, objects)
    }

    pub fn cells(&self) -> &[CellKind] {
        &self.cells
    }

    pub fn in_bounds(&self, p: GridPos) -> bool {
        p.x >= 0 && p.y >= 0 && p.x < self.width && p.y < self.height
    }

    fn idx(&self, p: GridPos) -> Option<usize> {
        index_of(self.width, self.height, p)
    }

    /// Out-of-bounds cells read as walls.
    pub fn cell(&self, p: GridPos) -> CellKind {
        self.idx(p).map_or(CellKind::Wall, |i| self.cells[i])
    }

    pub fn room_at(&self, p: GridPos) -> Option<usize> {
        self.idx(p).and_then(|i| self.room_of[i])
    }

    pub fn object_at(&self, p: GridPos) -> Option<usize> {
        self.idx(p).and_then(|i| self.object_of[i])
    }

    /// Floor or door cell without an object on it.
    pub fn is_free(&self, p: GridPos) -> bool {
        match self.idx(p) {
            Some(i) => self.cells[i] != CellKind::Wall && self.object_of[i].is_none(),
            None => false,
        }
    }

    pub fn free_cells(&self) -> impl Iterator<Item = GridPos> + '_ {
        (0..self.height)
            .flat_map(move |y| (0..self.width).map(move |x| GridPos::new(x, y)))
            .filter(move |p| self.is_free(*p))
    }

    pub fn target_cells(&self, target: TargetRef) -> Vec<GridPos> {
        match target {
            TargetRef::Room(r) => self.rooms[r].rect.cells().collect(),
            TargetRef::Object(o) => self.objects[o].footprint.cells().collect(),
        }
    }

    pub fn target_exists(&self, target: TargetRef) -> bool {
        match target {
            TargetRef::Room(r) => r < self.rooms.len(),
            TargetRef::Object(o) => o < self.objects.len(),
        }
    }

    /// Human-readable phrase of a target ("kitchen", "coffee machine").
    pub fn target_phrase(&self, target: TargetRef) -> &str {
        match target {
            TargetRef::Room(r) => &self.rooms[r].room_type,
            TargetRef::Object(o) => &self.objects[o].object_type,
        }
    }

    pub fn pose_is_valid(&self, pose: &AgentPose) -> bool {
        pose.heading.0 < HEADINGS && self.is_free(pose.cell)
    }
}

fn index_of(width: i32, height: i32, p: GridPos) -> Option<usize> {
    if p.x >= 0 && p.y >= 0 && p.x < width && p.y < height {
        Some((p.y * width + p.x) as usize)
    } else {
        None
    }
}

/// One of twelve headings; `Heading(k)` faces `30 * k` degrees, clockwise from +x
/// with y pointing down the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Heading(u8);

impl Heading {
    pub fn new(k: u8) -> Self {
        Heading(k % HEADINGS)
    }

    pub fn from_degrees(deg: u32) -> Option<Self> {
        (deg % 30 == 0 && deg < 360).then(|| Heading((deg / 30) as u8))
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn degrees(self) -> u32 {
        self.0 as u32 * 30
    }

    pub fn radians(self) -> f64 {
        (self.degrees() as f64).to_radians()
    }

    pub fn left(self) -> Self {
        Heading((self.0 + HEADINGS - 1) % HEADINGS)
    }

    pub fn right(self) -> Self {
        Heading((self.0 + 1) % HEADINGS)
    }

    /// Unit view direction `(cos, sin)`.
    pub fn direction(self) -> (f64, f64) {
        let a = self.radians();
        (a.cos(), a.sin())
    }

    /// Cell offset of a forward move: the 8-neighbour nearest to the heading.
    pub fn forward_offset(self) -> (i32, i32) {
        const OFFSETS: [(i32, i32); 12] = [
            (1, 0),
            (1, 1),
            (1, 1),
            (0, 1),
            (-1, 1),
            (-1, 1),
            (-1, 0),
            (-1, -1),
            (-1, -1),
            (0, -1),
            (1, -1),
            (1, -1),
        ];
        OFFSETS[self.0 as usize]
    }

    pub fn all() -> impl Iterator<Item = Heading> {
        (0..HEADINGS).map(Heading)
    }
}

impl Serialize for Heading {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u32(self.degrees())
    }
}

impl<'de> Deserialize<'de> for Heading {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let deg = u32::deserialize(d)?;
        Heading::from_degrees(deg)
            .ok_or_else(|| serde::de::Error::custom(format!("yaw {deg} is not a multiple of 30 below 360")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AgentPose {
    pub cell: GridPos,
    #[serde(rename = "yaw")]
    pub heading: Heading,
}

impl AgentPose {
    pub fn new(x: i32, y: i32, heading: Heading) -> Self {
        AgentPose { cell: GridPos::new(x, y), heading }
    }

    /// Position in meters (cell center).
    pub fn position_m(&self) -> (f64, f64) {
        self.cell.center_m()
    }
}

impl fmt::Display for AgentPose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}) @ {}°", self.cell.x, self.cell.y, self.heading.degrees())
    }
}

/// Navigation actions. There is no stop action; the controller's SELECT ends a leg.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Forward,
    TurnLeft,
    TurnRight,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Forward, Action::TurnLeft, Action::TurnRight];

    pub fn index(self) -> usize {
        match self {
            Action::Forward => 0,
            Action::TurnLeft => 1,
            Action::TurnRight => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Forward => "forward",
            Action::TurnLeft => "turn_left",
            Action::TurnRight => "turn_right",
        }
    }

    pub fn from_name(name: &str) -> Option<Action> {
        Action::ALL.into_iter().find(|a| a.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    pub pose: AgentPose,
    pub collided: bool,
}

/// Whether a one-cell move from `from` by `(dx, dy)` is allowed. Diagonal moves
/// may not cut a corner past a blocked orthogonal neighbour.
pub fn move_allowed(world: &HouseLayout, from: GridPos, dx: i32, dy: i32) -> bool {
    let to = from.offset(dx, dy);
    if !world.is_free(to) {
        return false;
    }
    if dx != 0 && dy != 0 {
        return world.is_free(from.offset(dx, 0)) && world.is_free(from.offset(0, dy));
    }
    true
}

/// Applies one action. Collisions leave the pose unchanged and are reported.
pub fn step(world: &HouseLayout, pose: AgentPose, action: Action) -> StepOutcome {
    match action {
        Action::TurnLeft => StepOutcome { pose: AgentPose { heading: pose.heading.left(), ..pose }, collided: false },
        Action::TurnRight => StepOutcome { pose: AgentPose { heading: pose.heading.right(), ..pose }, collided: false },
        Action::Forward => {
            let (dx, dy) = pose.heading.forward_offset();
            if move_allowed(world, pose.cell, dx, dy) {
                StepOutcome { pose: AgentPose { cell: pose.cell.offset(dx, dy), ..pose }, collided: false }
            } else {
                StepOutcome { pose, collided: true }
            }
        }
    }
}
